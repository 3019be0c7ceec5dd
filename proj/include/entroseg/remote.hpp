#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "entroseg/detection.hpp"

namespace entroseg {

inline constexpr std::chrono::milliseconds kDefaultRemoteTimeout{30000};

struct Endpoint {
    std::string host;
    int port = 0;
};

// `HOST:PORT` or `tcp://HOST:PORT`. Throws InputError otherwise.
Endpoint parse_endpoint(std::string_view text);

// Wire request for one region: {request_id, image (base64 PNG), meta}.
nlohmann::json make_detect_request(const std::string& request_id, const RasterImage& region,
                                   const std::string& segment_id);

// Checks a response against its request and returns the boxes in the region
// frame. Throws PipelineError on an error response, a request_id mismatch,
// malformed fields, boxes outside [0,width] x [0,height] or prob outside [0,1].
std::vector<DetBox> parse_detect_response(const nlohmann::json& response, const std::string& request_id,
                                          int width, int height);

// Client for an external detector speaking newline-delimited JSON over TCP.
// Each call opens its own connection, so calls may run concurrently.
class RemoteDetector : public TextDetector {
public:
    RemoteDetector(Endpoint endpoint, std::string model_id,
                   std::chrono::milliseconds timeout = kDefaultRemoteTimeout);

    std::vector<DetBox> detect(const RasterImage& region, const RegionContext& context) override;

    const Endpoint& endpoint() const { return endpoint_; }

private:
    Endpoint endpoint_;
    std::string model_id_;
    std::chrono::milliseconds timeout_;
    std::atomic<std::uint64_t> counter_{0};
};

}  // namespace entroseg
