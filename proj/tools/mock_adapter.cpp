// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

// Adapter process that answers the line protocol with the mock backends:
//   caption      payload image path  -> "mock-caption-<pixel hash>"
//   image        payload prompt      -> path of a PNG written to config.output_dir
//   embed_text   payload text        -> mock vector (config.encoder_id, config.dim)
//   embed_image  payload image path  -> mock vector
//
// Fault injection for tests:
//   OOCD_MOCK_FAIL_ON=<text>   answer ok=false for payloads containing <text>
//   OOCD_MOCK_EXIT_AFTER=<n>   exit without answering request n+1
//   OOCD_MOCK_GARBAGE=1        answer with a line that is not JSON

#include <cstdlib>
#include <iostream>
#include <string>

#include "json.hpp"
#include "oocd/encoder.hpp"
#include "oocd/generation.hpp"
#include "oocd/hash.hpp"
#include "oocd/image.hpp"

namespace {

using nlohmann::json;

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

json vector_json(const std::vector<float>& v) {
  json a = json::array();
  for (float x : v) a.push_back(x);
  return a;
}

json handle(const json& req) {
  const std::string kind = req.at("kind").get<std::string>();
  const std::string payload = req.at("payload").get<std::string>();
  const json& config = req.at("config");
  if (kind == "caption") {
    return "mock-caption-" + oocd::pixel_hash(oocd::read_png(payload));
  }
  if (kind == "image") {
    const auto img = oocd::MockImageBackend::render(
        payload, config.at("seed").get<std::int64_t>(), config.at("resolution").get<std::uint32_t>());
    const std::string out = config.at("output_dir").get<std::string>() + "/" +
                            oocd::to_hex64(oocd::fnv1a64(payload)) + ".png";
    oocd::write_png(img, out);
    return out;
  }
  if (kind == "embed_text" || kind == "embed_image") {
    oocd::EncoderSpec spec{config.at("encoder_id").get<std::string>(), oocd::Modality::kJoint,
                           config.at("dim").get<std::uint32_t>()};
    oocd::MockEncoder enc(spec);
    return vector_json(kind == "embed_text" ? enc.encode_text(payload)
                                            : enc.encode_image(payload));
  }
  throw std::runtime_error("unknown request kind '" + kind + "'");
}

}  // namespace

int main() {
  const std::string fail_on = env("OOCD_MOCK_FAIL_ON");
  const std::string exit_after = env("OOCD_MOCK_EXIT_AFTER");
  const bool garbage = env("OOCD_MOCK_GARBAGE") == "1";
  long served = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (!exit_after.empty() && served >= std::stol(exit_after)) return 3;
    ++served;
    if (garbage) {
      std::cout << "this is not json" << std::endl;
      continue;
    }
    json req, resp;
    try {
      req = json::parse(line);
      resp["id"] = req.at("id");
      const std::string payload = req.at("payload").get<std::string>();
      if (!fail_on.empty() && payload.find(fail_on) != std::string::npos) {
        resp["ok"] = false;
        resp["error"] = "injected failure for '" + payload + "'";
      } else {
        resp["result"] = handle(req);
        resp["ok"] = true;
      }
    } catch (const std::exception& e) {
      resp["ok"] = false;
      resp["error"] = e.what();
    }
    std::cout << resp.dump() << std::endl;
  }
  return 0;
}
