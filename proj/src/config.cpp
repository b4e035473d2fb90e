#include "sprint/config.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace sprint {

void RunConfig::validate() const {
  if (image_size <= 0 || image_channels <= 0)
    throw std::invalid_argument("config: image.size and image.channels must be positive");
  if (image_size % model.patch != 0)
    throw std::invalid_argument("config: image.size must be divisible by model.patch");
  model.validate();
  train.validate();
  data.validate();
  if (sample_steps < 1) throw std::invalid_argument("config: sample.steps must be >= 1");
  if (sample_w < 0.0) throw std::invalid_argument("config: sample.w must be >= 0");
  if (sample_count < 1) throw std::invalid_argument("config: sample.count must be >= 1");
  if (ckpt_every < 1) throw std::invalid_argument("config: ckpt.every must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct KvDoc {
  std::map<std::string, std::string> kv;

  bool take(const std::string& key, std::string* out) {
    auto it = kv.find(key);
    if (it == kv.end()) return false;
    *out = it->second;
    kv.erase(it);
    return true;
  }

  template <typename T, typename Parse>
  void get(const std::string& key, T* out, Parse parse) {
    std::string raw;
    if (!take(key, &raw)) return;
    try {
      *out = parse(raw);
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad value for " + key + ": '" + raw + "'");
    }
  }

  void get_i64(const std::string& key, int64_t* out) {
    get(key, out, [](const std::string& s) {
      size_t pos = 0;
      int64_t v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    });
  }
  void get_int(const std::string& key, int* out) {
    int64_t v = *out;
    get_i64(key, &v);
    *out = static_cast<int>(v);
  }
  void get_u64(const std::string& key, uint64_t* out) {
    get(key, out, [](const std::string& s) {
      size_t pos = 0;
      uint64_t v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    });
  }
  void get_f64(const std::string& key, double* out) {
    get(key, out, [](const std::string& s) {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    });
  }
  void get_str(const std::string& key, std::string* out) {
    get(key, out, [](const std::string& s) { return s; });
  }
  void get_bool(const std::string& key, bool* out) {
    get(key, out, [](const std::string& s) {
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw std::invalid_argument(s);
    });
  }
};

KvDoc parse_kv(const std::string& text) {
  KvDoc doc;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config: empty key on line " +
                                                 std::to_string(lineno));
    if (doc.kv.count(key))
      throw std::invalid_argument("config: duplicate key " + key);
    doc.kv[key] = val;
  }
  return doc;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  KvDoc doc = parse_kv(text);
  RunConfig c;

  doc.get_u64("seed", &c.seed);
  doc.get_str("io.out", &c.out_dir);
  doc.get_int("threads", &c.threads);

  doc.get_int("image.size", &c.image_size);
  doc.get_int("image.channels", &c.image_channels);

  doc.get_f64("data.sigma", &c.data.sigma);
  doc.get_f64("data.amp_lo", &c.data.amp_lo);
  doc.get_f64("data.amp_hi", &c.data.amp_hi);
  doc.get_i64("data.size", &c.data.size);
  if (doc.kv.count("data.seed")) {
    doc.get_u64("data.seed", &c.data.seed);
    c.data_seed_set = true;
  }

  doc.get_int("model.patch", &c.model.patch);
  doc.get_int("model.hidden", &c.model.hidden);
  doc.get_int("model.heads", &c.model.heads);
  doc.get_int("model.enc_depth", &c.model.enc_depth);
  doc.get_int("model.mid_depth", &c.model.mid_depth);
  doc.get_int("model.dec_depth", &c.model.dec_depth);
  doc.get_int("model.classes", &c.model.num_classes);
  doc.get_bool("mask_token.trainable", &c.model.mask_token_trainable);

  doc.get_str("drop.strategy", &c.train.drop_strategy);
  doc.get_int("drop.n", &c.train.group_n);
  doc.get_int("drop.k", &c.train.group_k);
  doc.get_f64("drop.ratio", &c.train.drop_ratio);

  doc.get_f64("time.loc", &c.train.time_loc);
  doc.get_f64("time.scale", &c.train.time_scale);

  doc.get_i64("pretrain.iters", &c.train.pretrain_iters);
  doc.get_f64("pretrain.lr", &c.train.pretrain_lr);
  doc.get_i64("finetune.iters", &c.train.finetune_iters);
  doc.get_f64("finetune.lr_start", &c.train.finetune_lr_start);
  doc.get_f64("finetune.lr_peak", &c.train.finetune_lr_peak);
  doc.get_i64("finetune.warmup", &c.train.finetune_warmup);

  doc.get_i64("train.batch", &c.train.batch);
  doc.get_f64("train.path_drop_prob", &c.train.path_drop_prob);
  doc.get_f64("train.class_drop_prob", &c.train.class_drop_prob);
  doc.get_f64("train.clip", &c.train.clip);
  doc.get_f64("train.wd", &c.train.weight_decay);
  doc.get_f64("train.beta1", &c.train.beta1);
  doc.get_f64("train.beta2", &c.train.beta2);
  doc.get_f64("train.eps", &c.train.adam_eps);

  doc.get_f64("ema.decay", &c.train.ema_decay);
  doc.get_f64("ema.warmup_decay", &c.train.ema_warmup_decay);

  doc.get_i64("sample.steps", &c.sample_steps);
  doc.get_f64("sample.w", &c.sample_w);
  {
    std::string mode;
    if (doc.take("sample.mode", &mode)) c.sample_mode = guidance_from_name(mode);
  }
  doc.get_i64("sample.count", &c.sample_count);

  doc.get_i64("ckpt.every", &c.ckpt_every);

  if (!doc.kv.empty())
    throw std::invalid_argument("config: unknown key '" + doc.kv.begin()->first + "'");

  // environment overrides
  if (const char* env = std::getenv("SPRINT_SEED")) {
    try {
      size_t pos = 0;
      c.seed = std::stoull(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("config: bad SPRINT_SEED '") + env + "'");
    }
  }
  if (const char* env = std::getenv("SPRINT_OUT")) c.out_dir = env;

  // derived fields
  if (c.image_size % c.model.patch != 0)
    throw std::invalid_argument("config: image.size must be divisible by model.patch");
  c.model.grid_rows = c.image_size / c.model.patch;
  c.model.grid_cols = c.image_size / c.model.patch;
  c.model.in_channels = c.image_channels;
  c.data.height = c.image_size;
  c.data.width = c.image_size;
  c.data.channels = c.image_channels;
  c.data.num_classes = c.model.num_classes;
  if (!c.data_seed_set) c.data.seed = c.seed;

  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_text(const RunConfig& cfg) {
  std::ostringstream s;
  s.precision(17);
  s << "seed = " << cfg.seed << "\n";
  s << "io.out = " << cfg.out_dir << "\n";
  s << "threads = " << cfg.threads << "\n";
  s << "image.size = " << cfg.image_size << "\n";
  s << "image.channels = " << cfg.image_channels << "\n";
  s << "data.sigma = " << cfg.data.sigma << "\n";
  s << "data.amp_lo = " << cfg.data.amp_lo << "\n";
  s << "data.amp_hi = " << cfg.data.amp_hi << "\n";
  s << "data.size = " << cfg.data.size << "\n";
  s << "data.seed = " << cfg.data.seed << "\n";
  s << "model.patch = " << cfg.model.patch << "\n";
  s << "model.hidden = " << cfg.model.hidden << "\n";
  s << "model.heads = " << cfg.model.heads << "\n";
  s << "model.enc_depth = " << cfg.model.enc_depth << "\n";
  s << "model.mid_depth = " << cfg.model.mid_depth << "\n";
  s << "model.dec_depth = " << cfg.model.dec_depth << "\n";
  s << "model.classes = " << cfg.model.num_classes << "\n";
  s << "mask_token.trainable = " << (cfg.model.mask_token_trainable ? "true" : "false") << "\n";
  s << "drop.strategy = " << cfg.train.drop_strategy << "\n";
  s << "drop.n = " << cfg.train.group_n << "\n";
  s << "drop.k = " << cfg.train.group_k << "\n";
  s << "drop.ratio = " << cfg.train.drop_ratio << "\n";
  s << "time.loc = " << cfg.train.time_loc << "\n";
  s << "time.scale = " << cfg.train.time_scale << "\n";
  s << "pretrain.iters = " << cfg.train.pretrain_iters << "\n";
  s << "pretrain.lr = " << cfg.train.pretrain_lr << "\n";
  s << "finetune.iters = " << cfg.train.finetune_iters << "\n";
  s << "finetune.lr_start = " << cfg.train.finetune_lr_start << "\n";
  s << "finetune.lr_peak = " << cfg.train.finetune_lr_peak << "\n";
  s << "finetune.warmup = " << cfg.train.finetune_warmup << "\n";
  s << "train.batch = " << cfg.train.batch << "\n";
  s << "train.path_drop_prob = " << cfg.train.path_drop_prob << "\n";
  s << "train.class_drop_prob = " << cfg.train.class_drop_prob << "\n";
  s << "train.clip = " << cfg.train.clip << "\n";
  s << "train.wd = " << cfg.train.weight_decay << "\n";
  s << "train.beta1 = " << cfg.train.beta1 << "\n";
  s << "train.beta2 = " << cfg.train.beta2 << "\n";
  s << "train.eps = " << cfg.train.adam_eps << "\n";
  s << "ema.decay = " << cfg.train.ema_decay << "\n";
  s << "ema.warmup_decay = " << cfg.train.ema_warmup_decay << "\n";
  s << "sample.steps = " << cfg.sample_steps << "\n";
  s << "sample.w = " << cfg.sample_w << "\n";
  s << "sample.mode = " << guidance_name(cfg.sample_mode) << "\n";
  s << "sample.count = " << cfg.sample_count << "\n";
  s << "ckpt.every = " << cfg.ckpt_every << "\n";
  return s.str();
}

std::string default_config_text() {
  return R"(# Every key with its default. Unknown keys are rejected.
seed = 0
io.out = out
threads = 0            # 0 = OpenMP default

image.size = 16
image.channels = 1

data.sigma = 1.8
data.amp_lo = 0.8
data.amp_hi = 1.2
data.size = 4096
# data.seed defaults to `seed`

model.patch = 2
model.hidden = 128
model.heads = 4
model.enc_depth = 2
model.mid_depth = 8
model.dec_depth = 2
model.classes = 4
mask_token.trainable = true

drop.strategy = structured   # structured | random
drop.n = 2                   # structured: group edge (keep k of n^2)
drop.k = 1
drop.ratio = 0.75            # random strategy only

time.loc = 0.0
time.scale = 1.0

pretrain.iters = 5000
pretrain.lr = 1e-4
finetune.iters = 1000        # 0 skips the phase
finetune.lr_start = 2e-6
finetune.lr_peak = 2e-4
finetune.warmup = 100

train.batch = 64
train.path_drop_prob = 0.1
train.class_drop_prob = 0.1
train.clip = 1.0
train.wd = 0.0
train.beta1 = 0.9
train.beta2 = 0.999
train.eps = 1e-8

ema.decay = 0.999
ema.warmup_decay = 0.99

sample.steps = 50
sample.w = 2.0
sample.mode = pdg            # none | cfg | pdg
sample.count = 400

ckpt.every = 1000
)";
}

}  // namespace sprint
