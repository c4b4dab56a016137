#include "opdlab/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace opdlab {
namespace {

constexpr char kMagic[8] = {'O', 'P', 'D', 'L', 'A', 'B', 'C', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw InvalidArgument("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Policy assemble(int vocab, int length, int levels, const std::vector<PromptId>& prompts, IclBias bias,
                std::vector<double> logits) {
  PolicyParameters params{ParameterLayout(vocab, length, levels), {}};
  for (const PromptId x : prompts) params.layout.add_prompt(x);
  if (logits.size() != params.layout.size()) throw InvalidArgument("checkpoint logit count does not match layout");
  params.logits = std::move(logits);
  return Policy(std::move(params), bias, ConfidenceGrid(levels - 1));
}

// Slots are assigned in insertion order; keep that order, not map order.
std::vector<PromptId> prompts_in_slot_order(const ParameterLayout& layout) {
  auto prompts = layout.prompts();
  std::sort(prompts.begin(), prompts.end(), [&](PromptId a, PromptId b) {
    return layout.confidence_row_offset(a, 0) < layout.confidence_row_offset(b, 0);
  });
  return prompts;
}

}  // namespace

std::string encode_checkpoint(const Policy& policy) {
  const auto& layout = policy.layout();
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(layout.vocab_size()));
  put_u32(out, static_cast<std::uint32_t>(layout.answer_length()));
  put_u32(out, static_cast<std::uint32_t>(layout.confidence_levels()));
  const auto prompts = prompts_in_slot_order(layout);
  put_u64(out, prompts.size());
  for (const PromptId x : prompts) put_u32(out, static_cast<std::uint32_t>(x));
  put_f64(out, policy.bias().answer);
  put_f64(out, policy.bias().confidence);
  const auto& logits = policy.parameters().logits;
  put_u64(out, logits.size());
  for (const double v : logits) put_f64(out, v);
  return out;
}

Policy decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw InvalidArgument("not an opdlab checkpoint");
  }
  const auto version = in.u32();
  if (version != kCheckpointVersion) throw InvalidArgument("unsupported checkpoint version " + std::to_string(version));
  const int vocab = static_cast<int>(in.u32());
  const int length = static_cast<int>(in.u32());
  const int levels = static_cast<int>(in.u32());
  const auto num_prompts = in.u64();
  if (num_prompts > (1u << 24)) throw InvalidArgument("checkpoint prompt count implausible");
  std::vector<PromptId> prompts(num_prompts);
  for (auto& x : prompts) x = static_cast<PromptId>(in.u32());
  IclBias bias;
  bias.answer = in.f64();
  bias.confidence = in.f64();
  const auto count = in.u64();
  if (count > bytes.size() / 8) throw InvalidArgument("checkpoint truncated");
  std::vector<double> logits(count);
  for (auto& v : logits) v = in.f64();
  if (!in.done()) throw InvalidArgument("checkpoint has trailing bytes");
  return assemble(vocab, length, levels, prompts, bias, std::move(logits));
}

std::string checkpoint_to_json(const Policy& policy) {
  const auto& layout = policy.layout();
  nlohmann::ordered_json out;
  out["format"] = "opdlab-checkpoint";
  out["version"] = kCheckpointVersion;
  out["vocab_size"] = layout.vocab_size();
  out["answer_length"] = layout.answer_length();
  out["confidence_levels"] = layout.confidence_levels();
  out["prompts"] = prompts_in_slot_order(layout);
  out["icl_answer_bias"] = policy.bias().answer;
  out["icl_confidence_bias"] = policy.bias().confidence;
  out["logits"] = policy.parameters().logits;
  return out.dump() + "\n";
}

Policy checkpoint_from_json(std::string_view text) {
  try {
    const auto in = nlohmann::json::parse(text);
    if (in.at("format") != "opdlab-checkpoint") throw InvalidArgument("not an opdlab checkpoint");
    if (in.at("version").get<std::uint32_t>() != kCheckpointVersion) throw InvalidArgument("unsupported checkpoint version");
    return assemble(in.at("vocab_size").get<int>(), in.at("answer_length").get<int>(),
                    in.at("confidence_levels").get<int>(), in.at("prompts").get<std::vector<PromptId>>(),
                    IclBias{in.at("icl_answer_bias").get<double>(), in.at("icl_confidence_bias").get<double>()},
                    in.at("logits").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed JSON checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  const bool json = path.extension() == ".json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write checkpoint: " + path.string());
  out << (json ? checkpoint_to_json(policy) : encode_checkpoint(policy));
}

Policy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read checkpoint: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();
  return path.extension() == ".json" ? checkpoint_from_json(bytes) : decode_checkpoint(bytes);
}

}  // namespace opdlab
