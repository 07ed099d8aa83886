// Regenerates the bundled synthetic IDX fixture.
//   make_fixture <output dir> [count] [seed]
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "spsb/dataset.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_fixture <output dir> [count] [seed]\n";
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  const std::size_t count = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1100;
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 36;
  std::filesystem::create_directories(dir);
  const auto digits = spsb::tasks::make_synthetic_digits(count, seed);
  spsb::tasks::write_idx(dir / "synthetic-images-idx3-ubyte", digits.images);
  spsb::tasks::write_idx(dir / "synthetic-labels-idx1-ubyte", digits.labels);
  std::cout << "wrote " << count << " images to " << dir << '\n';
  return 0;
}
