#include "fslqa/rcap.hpp"

#include <random>

namespace fslqa {

void RcapConfig::validate() const {
  if (w < 1 || w >= 100) throw Error("rcap: window side must satisfy 1 <= w < 100");
  if (kappa < 1 || kappa > 4) throw Error("rcap: kappa must lie in 1..4");
}

BinaryMask dihedral_transform(const BinaryMask& window, int direction) {
  if (direction < 1 || direction > 8) throw Error("rcap: direction must lie in 1..8");
  if (window.width() != window.height()) throw Error("rcap: window must be square");
  const int n = window.width();
  const int turns = (direction - 1) % 4;
  const bool flip = direction > 4;
  BinaryMask out(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int sr = r, sc = flip ? n - 1 - c : c;
      // Undo `turns` clockwise quarter turns to find the source pixel.
      for (int k = 0; k < turns; ++k) {
        const int tr = n - 1 - sc, tc = sr;
        sr = tr;
        sc = tc;
      }
      out.at(r, c) = window.at(sr, sc);
    }
  }
  return out;
}

RcapResult rcap_traced(const BinaryMask& t, const RcapConfig& cfg) {
  cfg.validate();
  RcapResult res{t, {}};
  std::mt19937_64 rng(cfg.rng_seed);
  const int w = cfg.w;
  const int half = w / 2;

  for (int it = 0; it < cfg.kappa; ++it) {
    std::vector<std::size_t> fg;
    for (std::size_t i = 0; i < res.mask.size(); ++i)
      if (res.mask[i]) fg.push_back(i);
    if (fg.empty()) break;

    RcapWindow win;
    const std::size_t seed = fg[std::uniform_int_distribution<std::size_t>(0, fg.size() - 1)(rng)];
    win.center_row = static_cast<int>(seed / static_cast<std::size_t>(t.width()));
    win.center_col = static_cast<int>(seed % static_cast<std::size_t>(t.width()));
    win.direction = std::uniform_int_distribution<int>(1, 8)(rng);
    win.flag = std::uniform_int_distribution<int>(0, 1)(rng);

    const int r0 = win.center_row - half, c0 = win.center_col - half;
    // Out-of-image pixels read as background; only in-image pixels are written.
    BinaryMask crop(w, w);
    for (int r = 0; r < w; ++r)
      for (int c = 0; c < w; ++c)
        if (res.mask.contains(r0 + r, c0 + c)) crop.at(r, c) = res.mask.at(r0 + r, c0 + c);
    BinaryMask moved = dihedral_transform(crop, win.direction);
    if (win.flag == 1)
      for (auto& v : moved.pixels()) v = v ? 0 : 1;

    win.paste_row = r0;
    win.paste_col = c0;
    if (cfg.offset_paste) {
      static constexpr int kDr[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
      static constexpr int kDc[8] = {0, 1, 1, 1, 0, -1, -1, -1};
      win.paste_row += kDr[win.direction - 1] * half;
      win.paste_col += kDc[win.direction - 1] * half;
    }
    for (int r = 0; r < w; ++r)
      for (int c = 0; c < w; ++c)
        if (res.mask.contains(win.paste_row + r, win.paste_col + c))
          res.mask.at(win.paste_row + r, win.paste_col + c) = moved.at(r, c);
    res.windows.push_back(win);
  }
  return res;
}

BinaryMask rcap(const BinaryMask& t, const RcapConfig& cfg) { return rcap_traced(t, cfg).mask; }

}  // namespace fslqa
