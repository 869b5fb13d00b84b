#include "tavg/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tavg/errors.hpp"

namespace tavg::train {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(where + ": expected a number, got '" + text + "'");
  return value;
}

std::string format_real(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_layers(const std::vector<audio::EncoderLayerSpec>& layers) {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ',';
    out += std::to_string(l.out_channels) + ':' + std::to_string(l.kernel_size) + ':' + std::to_string(l.stride);
  }
  return out;
}

std::vector<audio::EncoderLayerSpec> parse_layers(const std::string& text, const std::string& where) {
  std::vector<audio::EncoderLayerSpec> layers;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    const auto a = item.find(':'), b = item.rfind(':');
    if (a == std::string::npos || a == b) throw ConfigError(where + ": encoder layer must be channels:kernel:stride");
    layers.push_back({parse_number<int>(item.substr(0, a), where), parse_number<int>(item.substr(a + 1, b - a - 1), where),
                      parse_number<int>(item.substr(b + 1), where)});
  }
  if (layers.empty()) throw ConfigError(where + ": encoder_layers is empty");
  return layers;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  Getter get;
  Setter set;
};

template <typename T>
Field number_field(T TrainConfig::*member) {
  return {[member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_real(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          },
          [member](TrainConfig& c, const std::string& v, const std::string& where) {
            c.*member = parse_number<T>(v, where);
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"mode", {[](const TrainConfig& c) { return to_string(c.mode); },
                [](TrainConfig& c, const std::string& v, const std::string& where) {
                  try {
                    c.mode = parse_model_mode(v);
                  } catch (const ConfigError& e) {
                    throw ConfigError(where + ": " + e.what());
                  }
                }}},
      {"seed", number_field(&TrainConfig::seed)},
      {"iterations", number_field(&TrainConfig::iterations)},
      {"batch_size", number_field(&TrainConfig::batch_size)},
      {"lr_d", number_field(&TrainConfig::lr_d)},
      {"lr_g", number_field(&TrainConfig::lr_g)},
      {"beta1", number_field(&TrainConfig::beta1)},
      {"beta2", number_field(&TrainConfig::beta2)},
      {"adam_eps", number_field(&TrainConfig::adam_eps)},
      {"checkpoint_every", number_field(&TrainConfig::checkpoint_every)},
      {"encoder_layers", {[](const TrainConfig& c) { return format_layers(c.encoder_layers); },
                          [](TrainConfig& c, const std::string& v, const std::string& where) {
                            c.encoder_layers = parse_layers(v, where);
                          }}},
      {"leaky_slope", number_field(&TrainConfig::leaky_slope)},
      {"image_size", number_field(&TrainConfig::image_size)},
      {"g_base_channels", number_field(&TrainConfig::g_base_channels)},
      {"g_gru_kernel", number_field(&TrainConfig::g_gru_kernel)},
      {"d_base_channels", number_field(&TrainConfig::d_base_channels)},
      {"d_gru_channels", number_field(&TrainConfig::d_gru_channels)},
      {"d_gru_kernel", number_field(&TrainConfig::d_gru_kernel)},
  };
  return table;
}

}  // namespace

std::string to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::with_gru: return "with_gru";
    case ModelMode::no_gru: return "no_gru";
    case ModelMode::baseline: return "baseline";
  }
  return "?";
}

ModelMode parse_model_mode(const std::string& text) {
  if (text == "with_gru") return ModelMode::with_gru;
  if (text == "no_gru") return ModelMode::no_gru;
  if (text == "baseline") return ModelMode::baseline;
  throw ConfigError("unknown mode '" + text + "' (expected with_gru, no_gru or baseline)");
}

audio::EncoderConfig TrainConfig::encoder_config() const {
  audio::EncoderConfig c;
  c.layers = encoder_layers;
  c.leaky_slope = leaky_slope;
  if (mode == ModelMode::baseline) {
    if (!c.layers.empty()) c.layers.push_back(c.layers.back());
    c.input_length = data::kBaselineSamples;
  } else {
    c.input_length = data::kSegmentSamples;
  }
  return c;
}

gen::GeneratorConfig TrainConfig::generator_config() const {
  gen::GeneratorConfig c;
  c.head = mode == ModelMode::with_gru ? gen::Head::gru : gen::Head::direct;
  c.base_channels = g_base_channels;
  c.out_size = image_size;
  c.frames = frames();
  c.gru_kernel = g_gru_kernel;
  return c;
}

disc::DiscriminatorConfig TrainConfig::discriminator_config() const {
  disc::DiscriminatorConfig c;
  c.in_size = image_size;
  c.base_channels = d_base_channels;
  c.leaky_slope = leaky_slope;
  c.frames = frames();
  c.gru_channels = d_gru_channels;
  c.gru_kernel = d_gru_kernel;
  return c;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_d > 0) || !(lr_g > 0)) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (image_size <= 0 || data::kImageSize % image_size != 0) {
    throw ConfigError("image_size must divide the dataset crop size " + std::to_string(data::kImageSize));
  }
  encoder_config().validate();
  generator_config().validate();
  discriminator_config().validate();
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
  return out;
}

TrainConfig TrainConfig::parse(const std::string& text, const std::string& origin) {
  TrainConfig c;
  std::map<std::string, const Field*> lookup;
  for (const auto& [key, field] : fields()) lookup[key] = &field;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = lookup.find(key);
    if (it == lookup.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (seen.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    seen[key] = line_no;
    it->second->set(c, value, where + ": " + key);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

}  // namespace tavg::train
