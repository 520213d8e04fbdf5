#pragma once

// Kept out of gateway.hpp so fixture-only consumers do not pull in httplib.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "confrank/gateway.hpp"

namespace confrank::gateway {

class HttplibTransport : public WireTransport {
public:
    explicit HttplibTransport(const EndpointConfig& config)
        : client_(config.base_url) {
        const auto timeout = std::chrono::milliseconds(
            static_cast<long>(config.timeout_seconds * 1000.0));
        client_.set_connection_timeout(timeout);
        client_.set_read_timeout(timeout);
        client_.set_write_timeout(timeout);
    }

    Response post(const std::string& path, const std::string& body,
                  const std::vector<std::pair<std::string, std::string>>& headers)
        override {
        httplib::Headers h;
        for (const auto& [key, value] : headers) h.emplace(key, value);
        auto result = client_.Post(path, h, body, "application/json");
        if (!result) {
            return {0, "", true, httplib::to_string(result.error())};
        }
        return {result->status, result->body, false, ""};
    }

private:
    httplib::Client client_;
};

}  // namespace confrank::gateway
