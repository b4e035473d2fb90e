#include "sprint/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace sprint {

namespace {

constexpr const char* kMagic = "SPRINT-CKPT v1";

nlohmann::json config_to_json(const ModelConfig& mc) {
  return {{"enc_depth", mc.enc_depth},   {"mid_depth", mc.mid_depth},
          {"dec_depth", mc.dec_depth},   {"hidden", mc.hidden},
          {"heads", mc.heads},           {"patch", mc.patch},
          {"num_classes", mc.num_classes}, {"grid_rows", mc.grid_rows},
          {"grid_cols", mc.grid_cols},   {"in_channels", mc.in_channels},
          {"mask_token_trainable", mc.mask_token_trainable}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig mc;
  mc.enc_depth = j.at("enc_depth").get<int>();
  mc.mid_depth = j.at("mid_depth").get<int>();
  mc.dec_depth = j.at("dec_depth").get<int>();
  mc.hidden = j.at("hidden").get<int>();
  mc.heads = j.at("heads").get<int>();
  mc.patch = j.at("patch").get<int>();
  mc.num_classes = j.at("num_classes").get<int>();
  mc.grid_rows = j.at("grid_rows").get<int>();
  mc.grid_cols = j.at("grid_cols").get<int>();
  mc.in_channels = j.at("in_channels").get<int>();
  mc.mask_token_trainable = j.at("mask_token_trainable").get<bool>();
  return mc;
}

void write_floats(std::ofstream& out, const float* p, int64_t count) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count) * 4);
}

void read_floats(std::ifstream& in, float* p, int64_t count) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count) * 4);
  if (!in) throw std::runtime_error("checkpoint: truncated parameter blob");
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& st) {
  nlohmann::json header;
  header["config"] = config_to_json(st.net.cfg);
  header["meta"] = {{"iteration", st.iteration},
                    {"phase", phase_name(st.phase)},
                    {"phase_iter", st.phase_iter},
                    {"adam_t", st.adam_t},
                    {"rng", st.rng.serialize()}};
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : st.net.params.entries())
    entries.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset},
                       {"size", e.size}});
  header["entries"] = std::move(entries);
  header["sets"] = {"raw", "ema", "adam_m", "adam_v"};

  std::string htext = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << kMagic << "\n" << htext.size() << "\n" << htext;
  int64_t n = st.net.params.size();
  write_floats(out, st.net.params.data().data(), n);
  write_floats(out, st.ema.data().data(), n);
  write_floats(out, st.m.data(), n);
  write_floats(out, st.v.data(), n);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::unique_ptr<TrainState> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
  std::string len_line;
  std::getline(in, len_line);
  size_t hlen = 0;
  try {
    hlen = std::stoul(len_line);
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: bad header length in " + path);
  }
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(htext);

  ModelConfig mc = config_from_json(header.at("config"));
  auto st = std::make_unique<TrainState>(mc, 0);

  const auto& entries = header.at("entries");
  if (entries.size() != st->net.params.entries().size())
    throw std::runtime_error("checkpoint: parameter table does not match the config");
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& have = st->net.params.entries()[i];
    if (entries[i].at("name").get<std::string>() != have.name ||
        entries[i].at("offset").get<int64_t>() != have.offset ||
        entries[i].at("size").get<int64_t>() != have.size)
      throw std::runtime_error("checkpoint: entry mismatch at " + have.name);
  }

  int64_t n = st->net.params.size();
  read_floats(in, st->net.params.data().data(), n);
  read_floats(in, st->ema.data().data(), n);
  read_floats(in, st->m.data(), n);
  read_floats(in, st->v.data(), n);

  const auto& meta = header.at("meta");
  st->iteration = meta.at("iteration").get<int64_t>();
  st->phase_iter = meta.at("phase_iter").get<int64_t>();
  st->adam_t = meta.at("adam_t").get<int64_t>();
  std::string phase = meta.at("phase").get<std::string>();
  if (phase == "pretrain") st->phase = Phase::pretrain;
  else if (phase == "finetune") st->phase = Phase::finetune;
  else throw std::runtime_error("checkpoint: unknown phase '" + phase + "'");
  st->rng.deserialize(meta.at("rng").get<std::string>());
  st->net.bind();
  return st;
}

}  // namespace sprint
