#include "eulerflow/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "eulerflow/errors.hpp"
#include "eulerflow/rng.hpp"

namespace eulerflow {

namespace {

using nlohmann::json;

constexpr std::uint32_t kMagic = 0x53444645;  // "EFDS" little-endian
constexpr std::uint32_t kVersion = 1;

double wrapped_normal(RandomSource& rng, double mean, double variance) {
  return wrap_angle(mean + std::sqrt(variance) * normal01(rng));
}

// Deterministic generic frame used to take symmetric targets off the special
// axes; arbitrary but fixed so datasets are reproducible by seed alone.
// Conjugation frame for the cube symmetries, chosen so every mode stays well
// clear of the chart's degenerate band (max |R(2,0)| = 0.714 over the 24
// modes; nearby frames leave several modes above 0.95, which turns the cube
// set into a second singular-surface problem).
RotationMatrix generic_frame() {
  return euler_to_matrix(EulerAngles(3.14, 5.4934, 1.5765));
}

struct SampleSink {
  Dataset& ds;
  void rotation(bool train, const RotationMatrix& r) {
    (train ? ds.train_rotations : ds.test_rotations).push_back(r);
  }
  void context(bool train, const std::vector<double>& c) {
    auto& dst = train ? ds.train_contexts : ds.test_contexts;
    dst.insert(dst.end(), c.begin(), c.end());
  }
};

}  // namespace

Dataset generate_gimbal(const GimbalSpec& spec) {
  if (spec.train_n < 0 || spec.test_n < 0) throw InvalidParameter("gimbal: negative count");
  if (!(spec.sigma_sq > 0.0) || !(spec.sigma_phi_sq > 0.0)) {
    throw InvalidParameter("gimbal: variances must be positive");
  }
  Dataset ds;
  ds.name = "gimbal";
  ds.generator_spec = json{{"kind", "gimbal"},
                           {"sigma_sq", spec.sigma_sq},
                           {"sigma_phi_sq", spec.sigma_phi_sq},
                           {"phi_mode_shift", spec.phi_mode_shift},
                           {"train_n", spec.train_n},
                           {"test_n", spec.test_n},
                           {"seed", spec.seed}}
                          .dump();
  RandomSource rng(spec.seed ^ 0x67696d62616cULL);
  SampleSink sink{ds};
  const double half_pi = std::numbers::pi / 2.0;
  for (int i = 0; i < spec.train_n + spec.test_n; ++i) {
    const bool train = i < spec.train_n;
    const double omega = wrapped_normal(rng, 0.0, spec.sigma_sq);
    const double center = (uniform01(rng) < 0.5 ? half_pi : -half_pi) + spec.phi_mode_shift;
    const double phi = wrapped_normal(rng, center, spec.sigma_phi_sq * spec.sigma_sq);
    const double kappa = wrapped_normal(rng, 0.0, spec.sigma_sq);
    sink.rotation(train, euler_to_matrix(EulerAngles(omega, phi, kappa)));
  }
  return ds;
}

SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "peak") return SyntheticKind::Peak;
  if (s == "cone") return SyntheticKind::Cone;
  if (s == "cube") return SyntheticKind::Cube;
  if (s == "line") return SyntheticKind::Line;
  throw UnknownKind("unknown synthetic kind: " + s);
}

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::Peak: return "peak";
    case SyntheticKind::Cone: return "cone";
    case SyntheticKind::Cube: return "cube";
    case SyntheticKind::Line: return "line";
  }
  throw UnknownKind("bad synthetic kind value");
}

std::vector<RotationMatrix> cube_mode_centers() {
  // Signed permutation matrices with determinant +1, conjugated by the
  // generic frame so no center sits on a coordinate axis.
  std::vector<RotationMatrix> out;
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  const RotationMatrix f = generic_frame();
  const RotationMatrix ft = transpose(f);
  for (const auto& p : perms) {
    for (int sx = -1; sx <= 1; sx += 2)
      for (int sy = -1; sy <= 1; sy += 2)
        for (int sz = -1; sz <= 1; sz += 2) {
          RotationMatrix g;
          g.m.fill(0.0);
          g(0, p[0]) = sx;
          g(1, p[1]) = sy;
          g(2, p[2]) = sz;
          const double det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) -
                             g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0)) +
                             g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
          if (det > 0.5) out.push_back(matmul(f, matmul(g, ft)));
        }
  }
  return out;  // 24 of them
}

std::vector<RotationMatrix> toy_mode_centers(int c) {
  if (c <= 0) throw InvalidParameter("toy_mode_centers: class must be positive");
  std::vector<RotationMatrix> out;
  for (int j = 0; j < c; ++j) {
    out.push_back(euler_to_matrix(EulerAngles(0.0, 0.0, two_pi * j / c)));
  }
  return out;
}

Dataset generate_synthetic(SyntheticKind kind, const SyntheticSpec& spec) {
  if (spec.train_n < 0 || spec.test_n < 0) throw InvalidParameter("synthetic: negative count");
  Dataset ds;
  ds.name = to_string(kind);
  RandomSource rng(spec.seed ^ 0x73796e7468ULL);
  SampleSink sink{ds};

  const RotationMatrix peak_mode = euler_to_matrix(EulerAngles(1.1, 0.35, 4.9));
  const std::array<double, 3> cone_axis{0.0, 0.0, 1.0};
  const std::vector<RotationMatrix> cube_modes = cube_mode_centers();
  // Line: half-turn sweep about the body X axis from a base that sends X to
  // Z, so the whole segment lies in the chart's singular surface.  This is
  // the deliberately hard target: a continuous ridge of mass where the
  // Euler coordinates degenerate.
  const std::array<double, 3> line_axis{1.0, 0.0, 0.0};
  const RotationMatrix line_base =
      euler_to_matrix(EulerAngles(0.0, std::numbers::pi / 2.0, 0.9));

  double noise_sigma = 0.05;
  if (kind == SyntheticKind::Cube) noise_sigma = 0.1;
  if (kind == SyntheticKind::Cone) noise_sigma = 0.04;

  json gs{{"kind", to_string(kind)},
          {"noise_sigma", noise_sigma},
          {"train_n", spec.train_n},
          {"test_n", spec.test_n},
          {"seed", spec.seed}};
  if (kind == SyntheticKind::Line) gs["sweep"] = "half-turn";
  ds.generator_spec = gs.dump();

  for (int i = 0; i < spec.train_n + spec.test_n; ++i) {
    const bool train = i < spec.train_n;
    RotationMatrix r;
    switch (kind) {
      case SyntheticKind::Peak:
        r = peak_mode;
        break;
      case SyntheticKind::Cone:
        r = axis_angle_matrix(cone_axis, uniform_angle(rng));
        break;
      case SyntheticKind::Cube:
        r = cube_modes[uniform_index(rng, cube_modes.size())];
        break;
      case SyntheticKind::Line:
        r = matmul(line_base, axis_angle_matrix(line_axis, std::numbers::pi * uniform01(rng)));
        break;
    }
    sink.rotation(train, perturb_tangent(r, noise_sigma, rng));
  }
  return ds;
}

Dataset generate_conditional_toy(const ToySpec& spec) {
  if (spec.n_classes < 2) throw InvalidParameter("toy: need at least two classes");
  if (spec.train_n < 0 || spec.test_n < 0) throw InvalidParameter("toy: negative count");
  Dataset ds;
  ds.name = "conditional-toy";
  ds.context_width = spec.n_classes;
  ds.generator_spec = json{{"kind", "conditional-toy"},
                           {"n_classes", spec.n_classes},
                           {"blur_sigma", spec.blur_sigma},
                           {"train_n", spec.train_n},
                           {"test_n", spec.test_n},
                           {"seed", spec.seed}}
                          .dump();
  RandomSource rng(spec.seed ^ 0x746f79ULL);
  SampleSink sink{ds};
  std::vector<std::vector<RotationMatrix>> centers;
  for (int c = 1; c <= spec.n_classes; ++c) centers.push_back(toy_mode_centers(c));

  std::vector<double> onehot(static_cast<std::size_t>(spec.n_classes), 0.0);
  for (int i = 0; i < spec.train_n + spec.test_n; ++i) {
    const bool train = i < spec.train_n;
    const int c = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(spec.n_classes)));
    const auto& modes = centers[static_cast<std::size_t>(c)];
    const RotationMatrix center = modes[uniform_index(rng, modes.size())];
    sink.rotation(train, perturb_tangent(center, spec.blur_sigma, rng));
    std::fill(onehot.begin(), onehot.end(), 0.0);
    onehot[static_cast<std::size_t>(c)] = 1.0;
    sink.context(train, onehot);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());

  json header{{"name", ds.name},
              {"context_width", ds.context_width},
              {"train_count", ds.train_count()},
              {"test_count", ds.test_count()},
              {"generator_spec", ds.generator_spec.empty()
                                     ? json(nullptr)
                                     : json::parse(ds.generator_spec)}};
  const std::string htext = header.dump();

  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  put_u32(kMagic);
  put_u32(kVersion);
  put_u64(htext.size());
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

  auto put_block = [&](const std::vector<RotationMatrix>& rots, const std::vector<double>& ctx) {
    for (std::size_t i = 0; i < rots.size(); ++i) {
      out.write(reinterpret_cast<const char*>(rots[i].m.data()), 9 * sizeof(double));
      if (ds.context_width > 0) {
        out.write(reinterpret_cast<const char*>(ctx.data() + i * static_cast<std::size_t>(ds.context_width)),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(ds.context_width)));
      }
    }
  };
  put_block(ds.train_rotations, ds.train_contexts);
  put_block(ds.test_rotations, ds.test_contexts);
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());

  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw CorruptRecord("truncated header: " + path.string());
    return v;
  };
  auto get_u64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw CorruptRecord("truncated header: " + path.string());
    return v;
  };

  if (get_u32() != kMagic) throw CorruptRecord("bad magic: " + path.string());
  const std::uint32_t version = get_u32();
  if (version != kVersion) {
    throw FormatVersionMismatch("dataset version " + std::to_string(version) +
                                " not supported");
  }
  const std::uint64_t hlen = get_u64();
  if (hlen > (1u << 20)) throw CorruptRecord("implausible header length");
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw CorruptRecord("truncated header json");

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception&) {
    throw CorruptRecord("header is not valid json");
  }

  Dataset ds;
  try {
    ds.name = header.at("name").get<std::string>();
    ds.context_width = header.at("context_width").get<int>();
    const auto& gs = header.at("generator_spec");
    ds.generator_spec = gs.is_null() ? std::string{} : gs.dump();
    const std::size_t train_count = header.at("train_count").get<std::size_t>();
    const std::size_t test_count = header.at("test_count").get<std::size_t>();
    if (ds.context_width < 0) throw CorruptRecord("negative context width");

    auto read_block = [&](std::size_t n, std::vector<RotationMatrix>& rots,
                          std::vector<double>& ctx) {
      rots.resize(n);
      ctx.resize(n * static_cast<std::size_t>(ds.context_width));
      for (std::size_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(rots[i].m.data()), 9 * sizeof(double));
        if (ds.context_width > 0) {
          in.read(reinterpret_cast<char*>(ctx.data() + i * static_cast<std::size_t>(ds.context_width)),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(ds.context_width)));
        }
        if (!in) throw CorruptRecord("truncated record " + std::to_string(i));
        if (rotation_defect(rots[i]) > 1e-6) {
          throw CorruptRecord("record " + std::to_string(i) + " is not a rotation");
        }
      }
    };
    read_block(train_count, ds.train_rotations, ds.train_contexts);
    read_block(test_count, ds.test_rotations, ds.test_contexts);
  } catch (const json::exception&) {
    throw CorruptRecord("header missing required fields");
  }
  return ds;
}

void export_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "split,r00,r01,r02,r10,r11,r12,r20,r21,r22";
  for (int c = 0; c < ds.context_width; ++c) out << ",ctx_" << c;
  out << "\n";
  out.precision(17);
  auto put = [&](const char* split, const std::vector<RotationMatrix>& rots,
                 const std::vector<double>& ctx) {
    for (std::size_t i = 0; i < rots.size(); ++i) {
      out << split;
      for (double v : rots[i].m) out << ',' << v;
      for (int c = 0; c < ds.context_width; ++c)
        out << ',' << ctx[i * static_cast<std::size_t>(ds.context_width) + static_cast<std::size_t>(c)];
      out << '\n';
    }
  };
  put("train", ds.train_rotations, ds.train_contexts);
  put("test", ds.test_rotations, ds.test_contexts);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace eulerflow
