#include "ace/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <zlib.h>

namespace ace {
namespace {

constexpr char kMagic[8] = {'A', 'C', 'E', 'C', 'K', 'P', 'T', '\0'};

Json hex_values(std::span<const double> values) {
  Json out = Json::array();
  for (double v : values) out.push_back(format_hex(v));
  return out;
}

std::vector<double> from_hex_values(const Json& json) {
  std::vector<double> out;
  for (const auto& v : json) out.push_back(parse_hex(v.get<std::string>()));
  return out;
}

Json row_to_json(const TraceRow& r) {
  return Json{{"step", r.step},
              {"epoch", r.epoch},
              {"loss_train", format_hex(r.loss_train)},
              {"loss_val_raw", format_hex(r.loss_val_raw)},
              {"loss_val_proj", format_hex(r.loss_val_proj)},
              {"eq_error_exact", format_hex(r.eq_error_exact)},
              {"gamma", hex_values(r.gamma)},
              {"lambda", hex_values(r.lambda)},
              {"u", hex_values(r.u)},
              {"thm1_refined", format_hex(r.thm1_refined)},
              {"thm2_refined", format_hex(r.thm2_refined)}};
}

TraceRow row_from_json(const Json& j) {
  TraceRow r;
  r.step = j.at("step").get<std::size_t>();
  r.epoch = j.at("epoch").get<std::size_t>();
  r.loss_train = parse_hex(j.at("loss_train").get<std::string>());
  r.loss_val_raw = parse_hex(j.at("loss_val_raw").get<std::string>());
  r.loss_val_proj = parse_hex(j.at("loss_val_proj").get<std::string>());
  r.eq_error_exact = parse_hex(j.at("eq_error_exact").get<std::string>());
  r.gamma = from_hex_values(j.at("gamma"));
  r.lambda = from_hex_values(j.at("lambda"));
  r.u = from_hex_values(j.at("u"));
  r.thm1_refined = parse_hex(j.at("thm1_refined").get<std::string>());
  r.thm2_refined = parse_hex(j.at("thm2_refined").get<std::string>());
  return r;
}

std::uint32_t checksum(const std::vector<std::uint8_t>& payload) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), payload.data(), static_cast<uInt>(payload.size())));
}

}  // namespace

Json run_to_json(const TrainRun& run) {
  Json trace = Json::array();
  for (const auto& r : run.trace) trace.push_back(row_to_json(r));
  Json optimizer = Json::array();
  for (const auto& v : run.optimizer_state) optimizer.push_back(hex_values(v));
  Json j{{"format", "ace-run"},
         {"config", train_config_to_json(run.config)},
         {"model", model_to_json(run.model)},
         {"dual",
          {{"mode", to_string(run.dual.mode)},
           {"lambda", hex_values(run.dual.lambda)},
           {"u", hex_values(run.dual.u)},
           {"rho", format_hex(run.dual.rho)}}},
         {"trace", trace},
         {"step", run.step},
         {"epoch", run.epoch},
         {"rng_state", run.rng_state},
         {"optimizer_state", optimizer},
         {"diverged", run.diverged},
         {"divergence_step", run.divergence_step},
         {"failure", run.failure}};
  if (run.best) {
    j["best"] = Json{{"model", model_to_json(run.best->model)},
                     {"score", format_hex(run.best->score)},
                     {"step", run.best->step},
                     {"epoch", run.best->epoch}};
  } else {
    j["best"] = nullptr;
  }
  return j;
}

TrainRun run_from_json(const Json& j) {
  if (j.value("format", "") != "ace-run") throw CheckpointError("checkpoint: payload is not a training run");
  TrainRun run;
  run.config = train_config_from_json(j.at("config"));
  run.model = model_from_json(j.at("model"));
  const auto& d = j.at("dual");
  run.dual.mode = d.at("mode").get<std::string>() == "resilient" ? ConstraintMode::resilient : ConstraintMode::strict;
  run.dual.lambda = from_hex_values(d.at("lambda"));
  run.dual.u = from_hex_values(d.at("u"));
  run.dual.rho = parse_hex(d.at("rho").get<std::string>());
  run.dual.check_invariants();
  for (const auto& r : j.at("trace")) run.trace.push_back(row_from_json(r));
  run.step = j.at("step").get<std::size_t>();
  run.epoch = j.at("epoch").get<std::size_t>();
  run.rng_state = j.at("rng_state").get<std::string>();
  for (const auto& v : j.at("optimizer_state")) run.optimizer_state.push_back(from_hex_values(v));
  run.diverged = j.at("diverged").get<bool>();
  run.divergence_step = j.at("divergence_step").get<std::size_t>();
  run.failure = j.at("failure").get<std::string>();
  if (!j.at("best").is_null()) {
    const auto& b = j.at("best");
    run.best = Snapshot{model_from_json(b.at("model")), parse_hex(b.at("score").get<std::string>()),
                        b.at("step").get<std::size_t>(), b.at("epoch").get<std::size_t>()};
  }
  return run;
}

void save_checkpoint(const TrainRun& run, const std::filesystem::path& path, const Json& experiment) {
  const Json doc{{"run", run_to_json(run)}, {"experiment", experiment}};
  const std::vector<std::uint8_t> payload = Json::to_cbor(doc);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = payload.size();
  const std::uint32_t crc = checksum(payload);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

CheckpointContents load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < header + sizeof(std::uint32_t) || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError("checkpoint: " + path.string() + " is not an ACE checkpoint");

  std::uint32_t version = 0;
  std::uint64_t length = 0;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  std::memcpy(&length, bytes.data() + sizeof kMagic + sizeof version, sizeof length);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  if (length != bytes.size() - header - sizeof(std::uint32_t))
    throw CheckpointError("checkpoint: payload length does not match file size");

  std::vector<std::uint8_t> payload(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(header + length));
  std::uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + header + length, sizeof stored);
  if (stored != checksum(payload)) throw CheckpointError("checkpoint: checksum mismatch, payload is corrupt");

  try {
    const Json doc = Json::from_cbor(payload);
    CheckpointContents out{run_from_json(doc.at("run")), doc.at("experiment")};
    return out;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed payload: ") + e.what());
  }
}

}  // namespace ace
