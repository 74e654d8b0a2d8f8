#include "lfdet/scene.hpp"

#include "lfdet/errors.hpp"
#include "lfdet/random.hpp"

namespace lfdet {

Scene gen_scene(std::uint64_t seed, std::size_t n_objects, const SceneOptions& opt) {
  if (n_objects > kMaxSceneObjects)
    throw ContractError("gen_scene: at most " + std::to_string(kMaxSceneObjects) + " objects");
  if (!opt.channels || !opt.min_extent || opt.min_extent > opt.max_extent ||
      opt.max_extent > opt.size)
    throw ContractError("gen_scene: object extents do not fit the image");
  Rng rng(seed);
  Scene s;
  s.image = rng.uniform_tensor({opt.channels, opt.size, opt.size}, -opt.noise, opt.noise);
  const auto lo = static_cast<std::int64_t>(opt.min_extent);
  const auto hi = static_cast<std::int64_t>(opt.max_extent);
  for (std::size_t n = 0; n < n_objects; ++n) {
    const auto w = static_cast<std::size_t>(rng.uniform_int(lo, hi));
    const auto h = static_cast<std::size_t>(rng.uniform_int(lo, hi));
    const auto x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(opt.size - w)));
    const auto y0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(opt.size - h)));
    const auto cls = static_cast<std::size_t>(rng.uniform_int(0, 1));
    for (std::size_t c = 0; c < opt.channels; ++c)
      for (std::size_t y = y0; y < y0 + h; ++y)
        for (std::size_t x = x0; x < x0 + w; ++x)
          s.image.at(c, y, x) = (cls == 0 || ((y - y0) / 2) % 2 == 0) ? 1.0 : 0.0;
    s.gts.push_back({Box(static_cast<double>(x0) + static_cast<double>(w) / 2,
                         static_cast<double>(y0) + static_cast<double>(h) / 2,
                         static_cast<double>(w), static_cast<double>(h)),
                     cls});
  }
  return s;
}

}  // namespace lfdet
