#include "nslmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "nslmt/random.hpp"

namespace nslmt {

namespace {

constexpr char kMagic[] = "NSLMT-CKPT\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;
  template <typename T>
  T get() {
    if (pos + sizeof(T) > data.size()) throw CheckpointError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (pos + n > data.size()) throw CheckpointError("checkpoint: truncated file");
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["dim"] = c.dim;
  j["ffn_dim"] = c.ffn_dim;
  j["encoder_layers"] = c.encoder_layers;
  j["decoder_layers"] = c.decoder_layers;
  j["heads"] = c.heads;
  j["max_len"] = c.max_len;
  j["init_seed"] = c.init_seed;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    if (k == "vocab_size") c.vocab_size = v.get<std::size_t>();
    else if (k == "dim") c.dim = v.get<std::size_t>();
    else if (k == "ffn_dim") c.ffn_dim = v.get<std::size_t>();
    else if (k == "encoder_layers") c.encoder_layers = v.get<std::size_t>();
    else if (k == "decoder_layers") c.decoder_layers = v.get<std::size_t>();
    else if (k == "heads") c.heads = v.get<std::size_t>();
    else if (k == "max_len") c.max_len = v.get<std::size_t>();
    else if (k == "init_seed") c.init_seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("model config: unknown key '" + k + "'");
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model, const Tokenizer& tokenizer,
                     const TrainConfig& config, const TrainState& state) {
  const auto& params = model.parameters();
  nlohmann::ordered_json h;
  h["model"] = to_json(model.config());
  h["train"] = to_json(config);
  h["vocabulary"] = tokenizer.tokens();
  h["step"] = state.step;
  h["adam_steps"] = state.optimizer.steps();
  const bool has_moments = state.optimizer.first_moments().size() == params.size();
  h["has_moments"] = has_moments;
  auto& plist = h["parameters"] = nlohmann::ordered_json::array();
  for (const auto& p : params) plist.push_back({{"name", p.name}, {"shape", p.tensor.shape}});
  const std::string header = h.dump();

  std::string payload;
  std::uint64_t count = 0;
  auto dump = [&](const std::vector<double>& v) {
    payload.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    count += v.size();
  };
  for (const auto& p : params) dump(p.tensor.data);
  if (has_moments) {
    for (const auto& m : state.optimizer.first_moments()) dump(m);
    for (const auto& v : state.optimizer.second_moments()) dump(v);
  }

  std::string out(kMagic, kMagicLen);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  put<std::uint64_t>(out, count);
  out += payload;
  put<std::uint64_t>(out, fnv1a64(payload));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string data = ss.str();
  Reader r{data};
  if (r.bytes(kMagicLen) != std::string(kMagic, kMagicLen)) throw CheckpointError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto hlen = r.get<std::uint64_t>();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.model_config = model_config_from_json(h.at("model"));
    ck.train_config = train_config_from_json(h.at("train"));
    ck.tokenizer = Tokenizer(h.at("vocabulary").get<std::vector<std::string>>());
    ck.state.step = h.at("step").get<long long>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  if (ck.tokenizer.size() != ck.model_config.vocab_size) throw CheckpointError("checkpoint: vocabulary size mismatch");
  ck.model = std::make_unique<Seq2SeqModel>(ck.model_config);
  auto& params = ck.model->parameters();
  const auto& plist = h.at("parameters");
  if (plist.size() != params.size()) throw CheckpointError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (plist[i].at("name").get<std::string>() != params[i].name ||
        plist[i].at("shape").get<Shape>() != params[i].tensor.shape)
      throw CheckpointError("checkpoint: parameter layout mismatch at " + params[i].name);
  }
  const bool has_moments = h.at("has_moments").get<bool>();
  const auto count = r.get<std::uint64_t>();
  std::size_t expected = ck.model->parameter_count() * (has_moments ? 3 : 1);
  if (count != expected) throw CheckpointError("checkpoint: payload size mismatch");
  const std::string payload = r.bytes(count * sizeof(double));
  const auto checksum = r.get<std::uint64_t>();
  if (checksum != fnv1a64(payload)) throw CheckpointError("checkpoint: checksum mismatch (corrupt file)");
  if (r.pos != data.size()) throw CheckpointError("checkpoint: trailing bytes");
  std::size_t off = 0;
  auto fill = [&](std::vector<double>& v) {
    std::memcpy(v.data(), payload.data() + off, v.size() * sizeof(double));
    off += v.size() * sizeof(double);
  };
  for (auto& p : params) fill(p.tensor.data);
  ck.state.optimizer = AdamW(params, ck.train_config.adamw);
  ck.state.optimizer.set_steps(h.at("adam_steps").get<long long>());
  if (has_moments) {
    for (auto& m : ck.state.optimizer.first_moments()) fill(m);
    for (auto& v : ck.state.optimizer.second_moments()) fill(v);
  }
  return ck;
}

Checkpoint resume(const std::filesystem::path& path, const Tokenizer& tokenizer) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.tokenizer == tokenizer)) throw CheckpointError("checkpoint: vocabulary mismatch with the current tokenizer");
  return ck;
}

}  // namespace nslmt
