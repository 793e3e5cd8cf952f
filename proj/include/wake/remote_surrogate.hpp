#pragma once

#include "wake/base64.hpp"
#include "wake/errors.hpp"
#include "wake/field.hpp"

#include <httplib.h>
// The libc resolver header behind httplib defines _res as a macro,
// which breaks any later header using that identifier (Eigen does).
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

namespace wake {

/// Little-endian f32 packing used by the generate wire format.
inline std::string encode_f32_base64(const std::vector<double>& values) {
  std::string bytes;
  bytes.reserve(values.size() * 4);
  for (const double v : values) {
    const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i)
      bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  return base64_encode(bytes);
}

inline std::vector<double> decode_f32_base64(std::string_view text) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  if (bytes.size() % 4 != 0)
    throw FormatError("f32 payload: byte count not a multiple of 4");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k)
      u |= static_cast<std::uint32_t>(bytes[4 * i + k]) << (8 * k);
    out[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  return out;
}

struct RemoteOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8900
  double timeout_s = 10.0;
  int max_attempts = 3;
  double backoff_base_s = 0.5;
};

/// HTTP client for a generate service. Transport failures and 5xx responses
/// are retried with exponential backoff and surface as Kind::unavailable;
/// 4xx responses surface as Kind::invalid_parameter; malformed payloads as
/// Kind::decode.
class RemoteSurrogate {
 public:
  explicit RemoteSurrogate(RemoteOptions options)
      : options_(std::move(options)) {
    if (options_.endpoint.empty())
      throw std::invalid_argument("RemoteSurrogate: empty endpoint");
    if (options_.max_attempts < 1)
      throw std::invalid_argument("RemoteSurrogate: max_attempts must be >= 1");
    split_endpoint();
  }

  std::vector<Frame> generate(double spacing, int n_frames,
                              std::uint64_t seed) const {
    if (n_frames < 1)
      throw std::invalid_argument("RemoteSurrogate: n_frames must be >= 1");
    nlohmann::json body = {{"spacing", spacing},
                           {"n_frames", n_frames},
                           {"seed", seed}};
    const std::string payload = body.dump();

    std::string last_error = "no attempt made";
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      if (attempt > 1) {
        const double delay =
            options_.backoff_base_s * std::pow(2.0, attempt - 2);
        if (delay > 0.0)
          std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      httplib::Client client(host_);
      client.set_connection_timeout(std::chrono::duration<double>(
          options_.timeout_s));
      client.set_read_timeout(std::chrono::duration<double>(
          options_.timeout_s));
      auto res = client.Post(prefix_ + "/v1/generate", payload,
                             "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "server status " + std::to_string(res->status);
        continue;
      }
      if (res->status >= 400)
        throw RemoteError(RemoteError::Kind::invalid_parameter,
                          "generate rejected with status " +
                              std::to_string(res->status) + ": " + res->body);
      if (res->status != 200)
        throw RemoteError(RemoteError::Kind::decode,
                          "unexpected status " + std::to_string(res->status));
      return decode_response(res->body, n_frames);
    }
    throw RemoteError(RemoteError::Kind::unavailable,
                      "generate failed after " +
                          std::to_string(options_.max_attempts) +
                          " attempts (" + last_error + ")");
  }

  const RemoteOptions& options() const { return options_; }

 private:
  void split_endpoint() {
    const std::string& e = options_.endpoint;
    const auto scheme = e.find("://");
    if (scheme == std::string::npos)
      throw std::invalid_argument("RemoteSurrogate: endpoint must include scheme");
    const auto slash = e.find('/', scheme + 3);
    if (slash == std::string::npos) {
      host_ = e;
      prefix_.clear();
    } else {
      host_ = e.substr(0, slash);
      prefix_ = e.substr(slash);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
  }

  static std::vector<Frame> decode_response(const std::string& body,
                                            int n_frames) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(RemoteError::Kind::decode,
                        std::string("response is not valid JSON: ") + e.what());
    }
    try {
      Grid grid;
      grid.nx = j.at("nx").get<int>();
      grid.ny = j.at("ny").get<int>();
      grid.x0 = j.at("x0").get<double>();
      grid.y0 = j.at("y0").get<double>();
      grid.dx = j.at("dx").get<double>();
      grid.dy = j.at("dy").get<double>();
      grid.validate();

      const auto& frames = j.at("frames");
      if (!frames.is_array())
        throw RemoteError(RemoteError::Kind::decode, "frames is not an array");
      if (static_cast<int>(frames.size()) != n_frames)
        throw RemoteError(RemoteError::Kind::decode,
                          "frame count mismatch: requested " +
                              std::to_string(n_frames) + ", received " +
                              std::to_string(frames.size()));

      const auto cells = static_cast<std::size_t>(grid.size());
      std::vector<Frame> out;
      out.reserve(frames.size());
      for (const auto& jf : frames) {
        Frame f = Frame::zeros(grid);
        const struct {
          const char* key;
          std::vector<double>* dst;
        } comps[] = {{"u", &f.u}, {"v", &f.v}, {"p", &f.p}};
        for (const auto& c : comps) {
          std::vector<double> vals =
              decode_f32_base64(jf.at(c.key).get<std::string>());
          if (vals.size() != cells)
            throw RemoteError(RemoteError::Kind::decode,
                              std::string("field ") + c.key + " holds " +
                                  std::to_string(vals.size()) +
                                  " samples, grid expects " +
                                  std::to_string(cells));
          for (const double v : vals)
            if (!std::isfinite(v))
              throw RemoteError(RemoteError::Kind::decode,
                                std::string("non-finite sample in field ") +
                                    c.key);
          *c.dst = std::move(vals);
        }
        out.push_back(std::move(f));
      }
      return out;
    } catch (const RemoteError&) {
      throw;
    } catch (const FormatError& e) {
      throw RemoteError(RemoteError::Kind::decode, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(RemoteError::Kind::decode,
                        std::string("response schema error: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw RemoteError(RemoteError::Kind::decode, e.what());
    }
  }

  RemoteOptions options_;
  std::string host_;
  std::string prefix_;
};

}  // namespace wake
