#include <doctest.h>

#include <filesystem>

#include "hoi/image_io.hpp"

using namespace hoi;

TEST_CASE("pfm round trip is exact for float values") {
  Image img(5, 3, 3);
  for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = static_cast<float>(0.1 * k - 0.7);
  img.at(2, 1, 0) = std::numeric_limits<double>::infinity();
  const auto path = std::filesystem::temp_directory_path() / "hoi_test_io" / "a.pfm";
  write_pfm(path, img);
  const Image back = read_pfm(path);
  CHECK(back.same_shape(img));
  CHECK(back.data == img.data);
}

TEST_CASE("ppm round trip quantizes to 8 bits") {
  Image img(4, 4, 3);
  for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = (k % 256) / 255.0;
  const auto path = std::filesystem::temp_directory_path() / "hoi_test_io" / "a.ppm";
  write_ppm(path, img);
  const Image back = read_ppm(path);
  CHECK(back.same_shape(img));
  for (std::size_t k = 0; k < img.data.size(); ++k) CHECK(back.data[k] == doctest::Approx(img.data[k]).epsilon(1e-12));
}

TEST_CASE("bad image files are parse errors") {
  const auto path = std::filesystem::temp_directory_path() / "hoi_test_io" / "bad.ppm";
  std::filesystem::create_directories(path.parent_path());
  FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("P3\n1 1\n255\n", f);
  std::fclose(f);
  CHECK_THROWS_AS(read_ppm(path), Error);
  CHECK_THROWS_AS(read_pfm(std::filesystem::temp_directory_path() / "hoi_test_io" / "missing.pfm"), Error);
}
