#include "fedmeta/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fedmeta {

std::string format_double(Scalar x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  std::size_t first = 0, last = s.size();
  while (first < last && std::isspace(static_cast<unsigned char>(s[first]))) ++first;
  while (last > first && std::isspace(static_cast<unsigned char>(s[last - 1]))) --last;
  return s.substr(first, last - first);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
}

long long parse_ll(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, value);
  } catch (const std::out_of_range&) {
    bad_value(key, value);
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_ll(key, value);
  if (v < INT32_MIN || v > INT32_MAX) bad_value(key, value);
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || value[0] == '-') bad_value(key, value);
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, value);
  } catch (const std::out_of_range&) {
    bad_value(key, value);
  }
}

Scalar parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const Scalar v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, value);
  } catch (const std::out_of_range&) {
    bad_value(key, value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  if (trim(value).empty()) return out;
  for (const std::string& part : split_list(value)) out.push_back(parse_int(key, part));
  return out;
}

std::vector<Scalar> parse_real_list(const std::string& key, const std::string& value) {
  std::vector<Scalar> out;
  if (trim(value).empty()) return out;
  for (const std::string& part : split_list(value)) out.push_back(parse_real(key, part));
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ",";
    if constexpr (std::is_same_v<T, Scalar>) {
      out += format_double(items[i]);
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

bool is_classification_model(const std::string& model) {
  return model == "logistic" || model == "softmax" || model == "mlp";
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream lines(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(lines, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) + ": empty key");
    }
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    }

    if (key == "dataset") cfg.dataset = value;
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "threads") cfg.threads = parse_int(key, value);
    else if (key == "model") cfg.model = value;
    else if (key == "model_dim") cfg.model_dim = parse_int(key, value);
    else if (key == "num_classes") cfg.num_classes = parse_int(key, value);
    else if (key == "hidden") cfg.hidden = parse_int_list(key, value);
    else if (key == "cubic_coeff") cfg.cubic_coeff = parse_real(key, value);
    else if (key == "curvature") cfg.curvature = parse_real(key, value);
    else if (key == "spread") cfg.spread = parse_real(key, value);
    else if (key == "noise") cfg.noise = parse_real(key, value);
    else if (key == "samples_per_class") cfg.samples_per_class = parse_int(key, value);
    else if (key == "rows_per_set") cfg.rows_per_set = parse_int(key, value);
    else if (key == "class_filter") cfg.class_filter = value;
    else if (key == "num_nodes") cfg.num_nodes = parse_int(key, value);
    else if (key == "classes_per_node") cfg.classes_per_node = parse_int(key, value);
    else if (key == "size_low") cfg.size_low = parse_int(key, value);
    else if (key == "size_high") cfg.size_high = parse_int(key, value);
    else if (key == "source_fraction") cfg.source_fraction = parse_real(key, value);
    else if (key == "split_fraction") cfg.split_fraction = parse_real(key, value);
    else if (key == "algorithm") cfg.algorithm = value;
    else if (key == "rounds") cfg.rounds = parse_int(key, value);
    else if (key == "alpha") cfg.alpha = parse_real(key, value);
    else if (key == "lambda") cfg.lambda = parse_real(key, value);
    else if (key == "rho") cfg.rho = parse_real(key, value);
    else if (key == "delta_slope") cfg.delta_slope = parse_real(key, value);
    else if (key == "delta_offset") cfg.delta_offset = parse_real(key, value);
    else if (key == "weight_mode") cfg.weight_mode = value;
    else if (key == "adapt_steps") cfg.adapt_steps = parse_int_list(key, value);
    else if (key == "prior_checkpoint") cfg.prior_checkpoint = value;
    else if (key == "beta_outer") cfg.beta_outer = parse_real(key, value);
    else if (key == "local_steps") cfg.local_steps = parse_int(key, value);
    else if (key == "inner_tol") cfg.inner_tol = parse_real(key, value);
    else if (key == "inner_iters") cfg.inner_iters = parse_int(key, value);
    else if (key == "record_fosp") cfg.record_fosp = parse_bool(key, value);
    else if (key == "record_wallclock") cfg.record_wallclock = parse_bool(key, value);
    else if (key == "forgetting_lambdas") cfg.forgetting_lambdas = parse_real_list(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_config(buffer.str());
}

void validate_config(const RunConfig& cfg) {
  const bool synthetic_quadratic = cfg.dataset == "synthetic-quadratic";
  const bool synthetic_cubic = cfg.dataset == "synthetic-cubic";
  const bool synthetic_classes = cfg.dataset == "synthetic-classes";
  const bool idx = cfg.dataset.rfind("idx:", 0) == 0;
  const bool csv = cfg.dataset.rfind("csv:", 0) == 0;
  if (!synthetic_quadratic && !synthetic_cubic && !synthetic_classes && !idx && !csv) {
    throw std::invalid_argument("config: unknown dataset '" + cfg.dataset + "'");
  }
  if (idx) {
    const std::size_t second = cfg.dataset.find(':', 4);
    if (second == std::string::npos || second == 4 || second + 1 >= cfg.dataset.size()) {
      throw std::invalid_argument("config: idx dataset needs idx:<images>:<labels>");
    }
  }
  if (csv && cfg.dataset.size() <= 4) {
    throw std::invalid_argument("config: csv dataset needs csv:<path>");
  }

  if (cfg.model != "quadratic" && cfg.model != "cubic" && !is_classification_model(cfg.model)) {
    throw std::invalid_argument("config: unknown model '" + cfg.model + "'");
  }
  if (synthetic_quadratic && cfg.model != "quadratic") {
    throw std::invalid_argument("config: synthetic-quadratic data needs model = quadratic");
  }
  if (synthetic_cubic && cfg.model != "cubic") {
    throw std::invalid_argument("config: synthetic-cubic data needs model = cubic");
  }
  if ((synthetic_classes || idx || csv) && !is_classification_model(cfg.model)) {
    throw std::invalid_argument("config: labeled datasets need a classification model");
  }

  if (cfg.threads < 1) throw std::invalid_argument("config: threads must be positive");
  if (cfg.model_dim < 1) throw std::invalid_argument("config: model_dim must be positive");
  if (cfg.num_classes < 2) throw std::invalid_argument("config: num_classes must be at least 2");
  for (int h : cfg.hidden) {
    if (h < 1 || h > 64) throw std::invalid_argument("config: hidden sizes must lie in [1, 64]");
  }
  if (cfg.hidden.size() > 2) throw std::invalid_argument("config: at most two hidden layers");
  if (cfg.model == "mlp" && cfg.hidden.empty()) {
    throw std::invalid_argument("config: mlp model needs hidden layer sizes");
  }
  if (cfg.cubic_coeff < 0) throw std::invalid_argument("config: negative cubic_coeff");
  if (!(cfg.curvature > 0)) throw std::invalid_argument("config: curvature must be positive");
  if (cfg.spread < 0) throw std::invalid_argument("config: negative spread");
  if (cfg.noise < 0) throw std::invalid_argument("config: negative noise");
  if (cfg.samples_per_class < 1) {
    throw std::invalid_argument("config: samples_per_class must be positive");
  }
  if (cfg.rows_per_set < 1) throw std::invalid_argument("config: rows_per_set must be positive");

  if (!cfg.class_filter.empty()) {
    const std::size_t colon = cfg.class_filter.find(':');
    bool ok = colon != std::string::npos && colon > 0 && colon + 1 < cfg.class_filter.size();
    if (ok) {
      try {
        const int lo = parse_int("class_filter", cfg.class_filter.substr(0, colon));
        const int hi = parse_int("class_filter", cfg.class_filter.substr(colon + 1));
        ok = 0 <= lo && lo < hi;
      } catch (const std::invalid_argument&) {
        ok = false;
      }
    }
    if (!ok) throw std::invalid_argument("config: class_filter must be lo:hi with 0 <= lo < hi");
  }

  if (cfg.num_nodes < 1) throw std::invalid_argument("config: num_nodes must be positive");
  if (cfg.classes_per_node < 1) {
    throw std::invalid_argument("config: classes_per_node must be positive");
  }
  if (cfg.size_low < 1 || cfg.size_low > cfg.size_high) {
    throw std::invalid_argument("config: need 1 <= size_low <= size_high");
  }
  if (!(cfg.source_fraction > 0 && cfg.source_fraction < 1) ||
      !(cfg.split_fraction > 0 && cfg.split_fraction < 1)) {
    throw std::invalid_argument("config: fractions must lie in (0, 1)");
  }

  if (cfg.algorithm != "admm-fedmeta" && cfg.algorithm != "exact-admm" &&
      cfg.algorithm != "fedavg" && cfg.algorithm != "per-fedavg") {
    throw std::invalid_argument("config: unknown algorithm '" + cfg.algorithm + "'");
  }
  if (cfg.weight_mode != "data-proportional" && cfg.weight_mode != "uniform") {
    throw std::invalid_argument("config: unknown weight_mode '" + cfg.weight_mode + "'");
  }
  if (cfg.rounds < 0) throw std::invalid_argument("config: negative rounds");
  if (cfg.alpha < 0) throw std::invalid_argument("config: negative alpha");
  if (cfg.lambda < 0) throw std::invalid_argument("config: negative lambda");
  if (!(cfg.rho > 0)) throw std::invalid_argument("config: rho must be positive");
  if (cfg.delta_slope < 0) throw std::invalid_argument("config: negative delta_slope");
  if (!(cfg.delta_offset > 0)) throw std::invalid_argument("config: delta_offset must be positive");
  for (int s : cfg.adapt_steps) {
    if (s < 1) throw std::invalid_argument("config: adapt_steps must be positive");
  }
  if (cfg.beta_outer < 0) throw std::invalid_argument("config: negative beta_outer");
  if (cfg.local_steps < 1) throw std::invalid_argument("config: local_steps must be positive");
  if (!(cfg.inner_tol > 0)) throw std::invalid_argument("config: inner_tol must be positive");
  if (cfg.inner_iters < 1) throw std::invalid_argument("config: inner_iters must be positive");
  for (Scalar l : cfg.forgetting_lambdas) {
    if (l < 0) throw std::invalid_argument("config: negative forgetting lambda");
  }
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# run\n";
  out << "dataset = " << cfg.dataset << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "\n# model\n";
  out << "model = " << cfg.model << "\n";
  out << "model_dim = " << cfg.model_dim << "\n";
  out << "num_classes = " << cfg.num_classes << "\n";
  out << "hidden = " << join_list(cfg.hidden) << "\n";
  out << "cubic_coeff = " << format_double(cfg.cubic_coeff) << "\n";
  out << "curvature = " << format_double(cfg.curvature) << "\n";
  out << "\n# synthetic data\n";
  out << "spread = " << format_double(cfg.spread) << "\n";
  out << "noise = " << format_double(cfg.noise) << "\n";
  out << "samples_per_class = " << cfg.samples_per_class << "\n";
  out << "rows_per_set = " << cfg.rows_per_set << "\n";
  out << "class_filter = " << cfg.class_filter << "\n";
  out << "\n# node building\n";
  out << "num_nodes = " << cfg.num_nodes << "\n";
  out << "classes_per_node = " << cfg.classes_per_node << "\n";
  out << "size_low = " << cfg.size_low << "\n";
  out << "size_high = " << cfg.size_high << "\n";
  out << "source_fraction = " << format_double(cfg.source_fraction) << "\n";
  out << "split_fraction = " << format_double(cfg.split_fraction) << "\n";
  out << "\n# training plan\n";
  out << "algorithm = " << cfg.algorithm << "\n";
  out << "rounds = " << cfg.rounds << "\n";
  out << "alpha = " << format_double(cfg.alpha) << "\n";
  out << "lambda = " << format_double(cfg.lambda) << "\n";
  out << "rho = " << format_double(cfg.rho) << "\n";
  out << "delta_slope = " << format_double(cfg.delta_slope) << "\n";
  out << "delta_offset = " << format_double(cfg.delta_offset) << "\n";
  out << "weight_mode = " << cfg.weight_mode << "\n";
  out << "adapt_steps = " << join_list(cfg.adapt_steps) << "\n";
  out << "prior_checkpoint = " << cfg.prior_checkpoint << "\n";
  out << "beta_outer = " << format_double(cfg.beta_outer) << "\n";
  out << "local_steps = " << cfg.local_steps << "\n";
  out << "inner_tol = " << format_double(cfg.inner_tol) << "\n";
  out << "inner_iters = " << cfg.inner_iters << "\n";
  out << "record_fosp = " << (cfg.record_fosp ? "true" : "false") << "\n";
  out << "record_wallclock = " << (cfg.record_wallclock ? "true" : "false") << "\n";
  out << "forgetting_lambdas = " << join_list(cfg.forgetting_lambdas) << "\n";
  return out.str();
}

}  // namespace fedmeta
