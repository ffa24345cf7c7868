#include "cwcl/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace cwcl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return i;
  } catch (...) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return u;
  } catch (...) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

std::string fmt_pair_map(const std::map<int, int>& m) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [src, dst] : m) {
    if (!first) os << ",";
    os << src << ":" << dst;
    first = false;
  }
  return os.str();
}

std::map<int, int> parse_pair_map(const std::string& key, const std::string& v) {
  std::map<int, int> out;
  if (trim(v).empty()) return out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("key '" + key + "': expected src:dst pairs, got '" + v + "'");
    out[parse_int(key, trim(item.substr(0, colon)))] =
        parse_int(key, trim(item.substr(colon + 1)));
  }
  return out;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os << "# cwcl experiment configuration\n";
  os << "dataset.kind = " << dataset_kind << "\n";
  os << "dataset.path = " << dataset_path << "\n";
  os << "dataset.train_count = " << train_count << "\n";
  os << "dataset.test_count = " << test_count << "\n";
  os << "dataset.image_hw = " << image_hw << "\n";
  os << "dataset.classes = " << classes << "\n";
  os << "dataset.pixel_noise = " << fmt_double(pixel_noise) << "\n";
  os << "dataset.warp = " << fmt_double(warp) << "\n";
  os << "dataset.subset = " << subset << "\n";
  os << "noise.kind = " << noise.kind_str() << "\n";
  os << "noise.rate = " << fmt_double(noise.rate) << "\n";
  os << "noise.pair_map = " << fmt_pair_map(noise.pair_map) << "\n";
  os << "noise.include_self = " << (noise.include_self ? "true" : "false") << "\n";
  os << "noise.exact_count = " << (noise.exact_count ? "true" : "false") << "\n";
  os << "noise.select_all_classes = "
     << (noise.select_all_classes ? "true" : "false") << "\n";
  os << "noise.file = " << noise_file << "\n";
  os << "backbone.name = " << backbone << "\n";
  os << "backbone.widths = " << fmt_int_list(widths) << "\n";
  os << "backbone.blocks = " << fmt_int_list(blocks) << "\n";
  os << "train.lambda = " << fmt_double(plan.lambda) << "\n";
  os << "train.batch_size = " << plan.batch_size << "\n";
  os << "train.lr0 = " << fmt_double(plan.lr0) << "\n";
  os << "train.momentum = " << fmt_double(plan.momentum) << "\n";
  os << "train.weight_decay = " << fmt_double(plan.weight_decay) << "\n";
  os << "train.epochs_stage1 = " << plan.epochs_stage1 << "\n";
  os << "train.epochs_stage2 = " << plan.epochs_stage2 << "\n";
  os << "train.ema_decay = " << fmt_double(plan.ema_decay) << "\n";
  os << "train.gamma = " << fmt_double(plan.gamma) << "\n";
  os << "train.round_length = " << plan.round_length << "\n";
  os << "train.tau_cwcl = " << fmt_double(plan.tau_cwcl) << "\n";
  os << "train.tau_supcon = " << fmt_double(plan.tau_supcon) << "\n";
  os << "train.symmetrize = " << (plan.symmetrize ? "true" : "false") << "\n";
  os << "train.proj_hidden = " << plan.proj_hidden << "\n";
  os << "train.proj_dim = " << plan.proj_dim << "\n";
  os << "train.ckpt_every = " << plan.ckpt_every << "\n";
  os << "train.stage2_restart_schedule = "
     << (plan.stage2_restart_schedule ? "true" : "false") << "\n";
  os << "aug.random_crop = " << (plan.aug.random_crop ? "true" : "false") << "\n";
  os << "aug.crop_padding = " << plan.aug.crop_padding << "\n";
  os << "aug.hflip_prob = " << fmt_double(plan.aug.hflip_prob) << "\n";
  os << "aug.jitter_std = " << fmt_double(plan.aug.jitter_std) << "\n";
  os << "run.out = " << out_dir << "\n";
  os << "run.seed = " << plan.seed << "\n";
  os << "run.stage = " << stage << "\n";
  return os.str();
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "dataset.kind") cfg.dataset_kind = value;
    else if (key == "dataset.path") cfg.dataset_path = value;
    else if (key == "dataset.train_count") cfg.train_count = parse_int(key, value);
    else if (key == "dataset.test_count") cfg.test_count = parse_int(key, value);
    else if (key == "dataset.image_hw") cfg.image_hw = parse_int(key, value);
    else if (key == "dataset.classes") cfg.classes = parse_int(key, value);
    else if (key == "dataset.pixel_noise") cfg.pixel_noise = parse_double(key, value);
    else if (key == "dataset.warp") cfg.warp = parse_double(key, value);
    else if (key == "dataset.subset") cfg.subset = parse_int(key, value);
    else if (key == "noise.kind") cfg.noise.kind = NoiseSpec::kind_from_str(value);
    else if (key == "noise.rate") cfg.noise.rate = parse_double(key, value);
    else if (key == "noise.pair_map") cfg.noise.pair_map = parse_pair_map(key, value);
    else if (key == "noise.include_self") cfg.noise.include_self = parse_bool(key, value);
    else if (key == "noise.exact_count") cfg.noise.exact_count = parse_bool(key, value);
    else if (key == "noise.select_all_classes")
      cfg.noise.select_all_classes = parse_bool(key, value);
    else if (key == "noise.file") cfg.noise_file = value;
    else if (key == "backbone.name") cfg.backbone = value;
    else if (key == "backbone.widths") cfg.widths = parse_int_list(key, value);
    else if (key == "backbone.blocks") cfg.blocks = parse_int_list(key, value);
    else if (key == "train.lambda") cfg.plan.lambda = parse_double(key, value);
    else if (key == "train.batch_size") cfg.plan.batch_size = parse_int(key, value);
    else if (key == "train.lr0") cfg.plan.lr0 = parse_double(key, value);
    else if (key == "train.momentum") cfg.plan.momentum = parse_double(key, value);
    else if (key == "train.weight_decay") cfg.plan.weight_decay = parse_double(key, value);
    else if (key == "train.epochs_stage1") cfg.plan.epochs_stage1 = parse_int(key, value);
    else if (key == "train.epochs_stage2") cfg.plan.epochs_stage2 = parse_int(key, value);
    else if (key == "train.ema_decay") cfg.plan.ema_decay = parse_double(key, value);
    else if (key == "train.gamma") cfg.plan.gamma = parse_double(key, value);
    else if (key == "train.round_length") cfg.plan.round_length = parse_int(key, value);
    else if (key == "train.tau_cwcl") cfg.plan.tau_cwcl = parse_double(key, value);
    else if (key == "train.tau_supcon") cfg.plan.tau_supcon = parse_double(key, value);
    else if (key == "train.symmetrize") cfg.plan.symmetrize = parse_bool(key, value);
    else if (key == "train.proj_hidden") cfg.plan.proj_hidden = parse_int(key, value);
    else if (key == "train.proj_dim") cfg.plan.proj_dim = parse_int(key, value);
    else if (key == "train.ckpt_every") cfg.plan.ckpt_every = parse_int(key, value);
    else if (key == "train.stage2_restart_schedule")
      cfg.plan.stage2_restart_schedule = parse_bool(key, value);
    else if (key == "aug.random_crop") cfg.plan.aug.random_crop = parse_bool(key, value);
    else if (key == "aug.crop_padding") cfg.plan.aug.crop_padding = parse_int(key, value);
    else if (key == "aug.hflip_prob") cfg.plan.aug.hflip_prob = parse_double(key, value);
    else if (key == "aug.jitter_std") cfg.plan.aug.jitter_std = parse_double(key, value);
    else if (key == "run.out") cfg.out_dir = value;
    else if (key == "run.seed") cfg.plan.seed = parse_u64(key, value);
    else if (key == "run.stage") cfg.stage = value;
    else
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(serialize()); }

std::string ExperimentConfig::group_hash() const {
  ExperimentConfig c = *this;
  c.plan.seed = 0;
  c.out_dir.clear();
  return fnv1a_hex(c.serialize());
}

std::string ExperimentConfig::arm() const {
  if (plan.lambda == 0.0) return "ce";
  if (stage == "1-only" || plan.epochs_stage2 == 0) return "stage1";
  return "stage1+2";
}

void ExperimentConfig::validate() const {
  if (dataset_kind != "synthetic" && dataset_kind != "cifar10" &&
      dataset_kind != "cifar100" && dataset_kind != "folder")
    throw ConfigError("dataset.kind '" + dataset_kind + "' is not one of "
                      "synthetic/cifar10/cifar100/folder");
  if (dataset_kind != "synthetic" && dataset_path.empty())
    throw ConfigError("dataset.path required for dataset.kind=" + dataset_kind);
  if (stage != "both" && stage != "1-only" && stage != "2-only")
    throw ConfigError("run.stage '" + stage + "' is not one of both/1-only/2-only");
  if (backbone != "tiny" && backbone != "resnet18" && backbone != "custom")
    throw ConfigError("backbone.name '" + backbone + "' is not one of "
                      "tiny/resnet18/custom");
  if (backbone == "custom" && (widths.empty() || widths.size() != blocks.size()))
    throw ConfigError("backbone.name=custom needs matching backbone.widths/blocks");
  if (subset < 0) throw ConfigError("dataset.subset must be >= 0");
  plan.validate();
  backbone_spec().validate();
}

LabeledImageSet ExperimentConfig::load_train() const {
  LabeledImageSet set;
  if (dataset_kind == "synthetic") {
    SyntheticSpec s{classes, image_hw, 3, pixel_noise, warp};
    set = make_synthetic(s, train_count, Split::train, plan.seed);
  } else if (dataset_kind == "cifar10") {
    set = load_cifar10(dataset_path, Split::train);
  } else if (dataset_kind == "cifar100") {
    set = load_cifar100(dataset_path, Split::train);
  } else {
    set = load_image_folder(dataset_path + "/train", image_hw);
  }
  if (subset > 0 && subset < set.size()) {
    LabeledImageSet cut;
    cut.num_classes = set.num_classes;
    cut.split = set.split;
    cut.labels.assign(set.labels.begin(), set.labels.begin() + subset);
    const auto plane = set.images.dim(1) * set.images.dim(2) * set.images.dim(3);
    cut.images.shape = {subset, set.images.dim(1), set.images.dim(2), set.images.dim(3)};
    cut.images.data.assign(set.images.data.begin(),
                           set.images.data.begin() + subset * plane);
    return cut;
  }
  return set;
}

LabeledImageSet ExperimentConfig::load_test() const {
  if (dataset_kind == "synthetic") {
    SyntheticSpec s{classes, image_hw, 3, pixel_noise, warp};
    return make_synthetic(s, test_count, Split::test, plan.seed);
  }
  if (dataset_kind == "cifar10") return load_cifar10(dataset_path, Split::test);
  if (dataset_kind == "cifar100") return load_cifar100(dataset_path, Split::test);
  return load_image_folder(dataset_path + "/test", image_hw);
}

nn::BackboneSpec ExperimentConfig::backbone_spec() const {
  nn::BackboneSpec s;
  if (backbone == "tiny") {
    s = nn::BackboneSpec::tiny(classes, image_hw);
  } else if (backbone == "resnet18") {
    s = nn::BackboneSpec::resnet18(classes, image_hw);
  } else {
    s.widths = widths;
    s.blocks = blocks;
    s.in_hw = image_hw;
    s.num_classes = classes;
  }
  if (dataset_kind == "cifar10") s.num_classes = 10;
  if (dataset_kind == "cifar100") s.num_classes = 100;
  return s;
}

}  // namespace cwcl
