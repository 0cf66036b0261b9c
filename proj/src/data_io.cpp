#include "fedmeta/data_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fedmeta {

namespace {

std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("idx: truncated file '" + path + "'");
  }
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

std::vector<unsigned char> read_bytes(std::istream& is, std::size_t count,
                                      const std::string& path) {
  std::vector<unsigned char> bytes(count);
  if (count > 0 && !is.read(reinterpret_cast<char*>(bytes.data()),
                            static_cast<std::streamsize>(count))) {
    throw std::runtime_error("idx: truncated file '" + path + "'");
  }
  return bytes;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("idx: cannot open '" + images_path + "'");
  const std::uint32_t image_magic = read_be_u32(images, images_path);
  if (image_magic != 0x00000803u) {
    std::ostringstream msg;
    msg << "idx: wrong image magic 0x" << std::hex << image_magic << " in '" << images_path
        << "', expected 0x803";
    throw std::runtime_error(msg.str());
  }
  const std::uint32_t image_count = read_be_u32(images, images_path);
  const std::uint32_t rows = read_be_u32(images, images_path);
  const std::uint32_t cols = read_be_u32(images, images_path);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  const std::vector<unsigned char> image_bytes =
      read_bytes(images, static_cast<std::size_t>(image_count) * pixels, images_path);

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("idx: cannot open '" + labels_path + "'");
  const std::uint32_t label_magic = read_be_u32(labels, labels_path);
  if (label_magic != 0x00000801u) {
    std::ostringstream msg;
    msg << "idx: wrong label magic 0x" << std::hex << label_magic << " in '" << labels_path
        << "', expected 0x801";
    throw std::runtime_error(msg.str());
  }
  const std::uint32_t label_count = read_be_u32(labels, labels_path);
  const std::vector<unsigned char> label_bytes = read_bytes(labels, label_count, labels_path);

  if (image_count != label_count) {
    throw std::runtime_error("idx: count mismatch, " + std::to_string(image_count) +
                             " images vs " + std::to_string(label_count) + " labels");
  }

  Dataset out;
  out.features.resize(image_count, static_cast<Eigen::Index>(pixels));
  out.labels.resize(label_count);
  for (std::uint32_t i = 0; i < image_count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      out.features(i, static_cast<Eigen::Index>(p)) =
          static_cast<Scalar>(image_bytes[i * pixels + p]) / 255.0;
    }
    out.labels[i] = label_bytes[i];
  }
  return out;
}

Dataset load_csv(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("csv: cannot open '" + path + "'");

  std::vector<std::vector<Scalar>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<Scalar> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      Scalar v;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error("csv: non-numeric cell at line " + std::to_string(line_no));
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) {
        throw std::runtime_error("csv: non-numeric cell at line " + std::to_string(line_no));
      }
      values.push_back(v);
    }
    if (values.size() < 2) {
      throw std::runtime_error("csv: line " + std::to_string(line_no) +
                               " needs at least one feature and a label");
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw std::runtime_error("csv: inconsistent column count at line " +
                               std::to_string(line_no));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw std::runtime_error("csv: no data rows in '" + path + "'");

  const auto dim = static_cast<Eigen::Index>(rows.front().size() - 1);
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      out.features(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
    const Scalar label = rows[i].back();
    if (label < 0 || label != std::floor(label)) {
      throw std::runtime_error("csv: label column must hold nonnegative integers");
    }
    out.labels[static_cast<Eigen::Index>(i)] = static_cast<int>(label);
  }
  return out;
}

SyntheticData generate_synthetic(SyntheticKind kind, const SyntheticParams& params,
                                 std::uint64_t seed) {
  if (params.dim < 1) throw std::invalid_argument("generate_synthetic: dim must be positive");
  if (params.spread < 0) throw std::invalid_argument("generate_synthetic: negative spread");
  const RngStream root = RngStream(seed).split("synthetic");

  SyntheticData out;
  if (kind == SyntheticKind::kGaussianClasses) {
    if (params.num_classes < 2) {
      throw std::invalid_argument("generate_synthetic: need at least two classes");
    }
    if (params.samples_per_class < 1) {
      throw std::invalid_argument("generate_synthetic: need samples in every class");
    }
    if (params.noise < 0) throw std::invalid_argument("generate_synthetic: negative noise");

    RngStream mean_rng = root.split("means");
    RngStream sample_rng = root.split("samples");
    const int total = params.num_classes * params.samples_per_class;
    out.class_means.resize(params.num_classes, params.dim);
    out.samples.features.resize(total, params.dim);
    out.samples.labels.resize(total);
    int row = 0;
    for (int c = 0; c < params.num_classes; ++c) {
      const ParamVector mean = draw_gaussian(mean_rng, params.dim, 0.0, params.spread);
      out.class_means.row(c) = mean.transpose();
      for (int s = 0; s < params.samples_per_class; ++s, ++row) {
        const ParamVector x = mean + draw_gaussian(sample_rng, params.dim, 0.0, params.noise);
        out.samples.features.row(row) = x.transpose();
        out.samples.labels[row] = c;
      }
    }
    return out;
  }

  if (params.num_tasks < 1) {
    throw std::invalid_argument("generate_synthetic: need at least one task");
  }
  if (params.rows_per_set < 1) {
    throw std::invalid_argument("generate_synthetic: need rows in every set");
  }
  ParamVector curvature = params.curvature_diag;
  if (curvature.size() == 0) curvature = ParamVector::Ones(params.dim);
  if (curvature.size() != params.dim) {
    throw std::invalid_argument("generate_synthetic: curvature dimension mismatch");
  }

  out.tasks.reserve(static_cast<std::size_t>(params.num_tasks));
  for (int i = 0; i < params.num_tasks; ++i) {
    RngStream task_rng = root.split(static_cast<std::uint64_t>(i));
    SyntheticTask task;
    task.center = draw_gaussian(task_rng, params.dim, 0.0, params.spread);
    task.loss = kind == SyntheticKind::kQuadraticMixture
                    ? make_quadratic(task.center, curvature)
                    : make_cubic_quadratic(curvature, params.cubic_coeff);
    task.support = make_center_dataset(task.center, params.rows_per_set);
    task.query = make_center_dataset(task.center, params.rows_per_set);
    out.tasks.push_back(std::move(task));
  }
  return out;
}

}  // namespace fedmeta
