#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <memory>

#include "entroseg/error.hpp"
#include "entroseg/io.hpp"
#include "entroseg/remote.hpp"

namespace entroseg {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kMaxResponseBytes = 64u << 20;

class Socket {
public:
    explicit Socket(int fd) : fd_(fd) {}
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() {
        if (fd_ >= 0) {
            ::close(fd_);
        }
    }
    int get() const { return fd_; }

private:
    int fd_;
};

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
}

// Waits for `events` on fd; throws PipelineError on timeout.
void wait_for(int fd, short events, Clock::time_point deadline, const std::string& what) {
    for (;;) {
        pollfd p{fd, events, 0};
        const int left = remaining_ms(deadline);
        if (left == 0) {
            throw PipelineError(what + ": timeout");
        }
        const int rc = ::poll(&p, 1, left);
        if (rc > 0) {
            return;
        }
        if (rc == 0) {
            throw PipelineError(what + ": timeout");
        }
        if (errno != EINTR) {
            throw PipelineError(what + ": " + std::strerror(errno));
        }
    }
}

std::unique_ptr<Socket> connect_to(const Endpoint& ep, Clock::time_point deadline) {
    const std::string where = ep.host + ":" + std::to_string(ep.port);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    if (const int rc = ::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &found); rc != 0) {
        throw PipelineError("cannot resolve " + where + ": " + ::gai_strerror(rc));
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> list(found, &::freeaddrinfo);
    std::string last_error = "no address";
    for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
        auto s = std::make_unique<Socket>(::socket(a->ai_family, a->ai_socktype | SOCK_NONBLOCK, a->ai_protocol));
        if (s->get() < 0) {
            last_error = std::strerror(errno);
            continue;
        }
        if (::connect(s->get(), a->ai_addr, a->ai_addrlen) != 0) {
            if (errno != EINPROGRESS) {
                last_error = std::strerror(errno);
                continue;
            }
            wait_for(s->get(), POLLOUT, deadline, "connect to " + where);
            int err = 0;
            socklen_t len = sizeof err;
            ::getsockopt(s->get(), SOL_SOCKET, SO_ERROR, &err, &len);
            if (err != 0) {
                last_error = std::strerror(err);
                continue;
            }
        }
        return s;
    }
    throw PipelineError("cannot connect to " + where + ": " + last_error);
}

void send_all(int fd, const std::string& data, Clock::time_point deadline) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n > 0) {
            sent += static_cast<std::size_t>(n);
        } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
            wait_for(fd, POLLOUT, deadline, "send");
        } else if (n < 0 && errno == EINTR) {
            continue;
        } else {
            throw PipelineError(std::string("send: ") + std::strerror(errno));
        }
    }
}

std::string read_line(int fd, Clock::time_point deadline) {
    std::string line;
    char buf[65536];
    for (;;) {
        const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n > 0) {
            const char* end = static_cast<const char*>(std::memchr(buf, '\n', static_cast<std::size_t>(n)));
            if (end != nullptr) {
                line.append(buf, static_cast<std::size_t>(end - buf));
                return line;
            }
            line.append(buf, static_cast<std::size_t>(n));
            if (line.size() > kMaxResponseBytes) {
                throw PipelineError("response exceeds the size limit");
            }
        } else if (n == 0) {
            throw PipelineError("connection closed before a complete response");
        } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
            wait_for(fd, POLLIN, deadline, "receive");
        } else if (errno != EINTR) {
            throw PipelineError(std::string("receive: ") + std::strerror(errno));
        }
    }
}

double number(const json& box, const char* key) {
    const auto it = box.find(key);
    if (it == box.end() || !it->is_number()) {
        throw PipelineError(std::string("response box lacks numeric '") + key + "'");
    }
    return it->get<double>();
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
    const std::string original(text);
    if (text.starts_with("tcp://")) {
        text.remove_prefix(6);
    }
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
        throw InputError("endpoint '" + original + "' must be HOST:PORT");
    }
    Endpoint e;
    e.host = std::string(text.substr(0, colon));
    const auto port = text.substr(colon + 1);
    const auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), e.port);
    if (ec != std::errc() || end != port.data() + port.size() || e.port < 1 || e.port > 65535) {
        throw InputError("endpoint '" + original + "' has an invalid port");
    }
    return e;
}

json make_detect_request(const std::string& request_id, const RasterImage& region, const std::string& segment_id) {
    const auto png = encode_png(region);
    return {
        {"request_id", request_id},
        {"image", base64_encode(png)},
        {"meta", {{"segment_id", segment_id}, {"width", region.width()}, {"height", region.height()}}},
    };
}

std::vector<DetBox> parse_detect_response(const json& r, const std::string& request_id, int width, int height) {
    if (!r.is_object()) {
        throw PipelineError("response is not a JSON object");
    }
    const auto id = r.find("request_id");
    if (id == r.end() || !id->is_string() || id->get<std::string>() != request_id) {
        throw PipelineError("response request_id does not echo '" + request_id + "'");
    }
    const auto error = r.find("error");
    const bool has_error = error != r.end() && !error->is_null();
    const auto boxes = r.find("boxes");
    const bool has_boxes = boxes != r.end() && !boxes->is_null();
    if (has_error) {
        if (has_boxes) {
            throw PipelineError("response carries both error and boxes");
        }
        throw PipelineError("detector error: " + (error->is_string() ? error->get<std::string>() : error->dump()));
    }
    if (!has_boxes || !boxes->is_array()) {
        throw PipelineError("response lacks a boxes array");
    }
    std::string model_id = "external";
    if (const auto m = r.find("model_id"); m != r.end() && m->is_string()) {
        model_id = m->get<std::string>();
    }
    std::vector<DetBox> out;
    for (const auto& b : *boxes) {
        if (!b.is_object()) {
            throw PipelineError("response box is not an object");
        }
        DetBox d{number(b, "x1"), number(b, "y1"), number(b, "x2"), number(b, "y2"), number(b, "prob"), model_id,
                 Frame::Segment};
        if (!(d.prob >= 0.0 && d.prob <= 1.0)) {
            throw PipelineError("response box prob outside [0,1]");
        }
        if (!(d.x1 >= 0.0 && d.y1 >= 0.0 && d.x1 <= d.x2 && d.y1 <= d.y2 && d.x2 <= width && d.y2 <= height)) {
            throw PipelineError("bounds violation: response box outside the " + std::to_string(width) + "x" +
                                std::to_string(height) + " region");
        }
        out.push_back(std::move(d));
    }
    return out;
}

RemoteDetector::RemoteDetector(Endpoint endpoint, std::string model_id, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)), timeout_(timeout) {
    if (endpoint_.host.empty() || endpoint_.port < 1 || endpoint_.port > 65535) {
        throw InvalidArgument("RemoteDetector: invalid endpoint");
    }
    if (timeout_.count() <= 0) {
        throw InvalidArgument("RemoteDetector: timeout must be positive");
    }
}

std::vector<DetBox> RemoteDetector::detect(const RasterImage& region, const RegionContext& context) {
    const auto deadline = Clock::now() + timeout_;
    const std::string request_id = model_id_ + "-" + std::to_string(counter_.fetch_add(1));
    const std::string line = make_detect_request(request_id, region, context.segment_id).dump() + "\n";

    const auto socket = connect_to(endpoint_, deadline);
    send_all(socket->get(), line, deadline);
    const std::string reply = read_line(socket->get(), deadline);
    json response;
    try {
        response = json::parse(reply);
    } catch (const json::parse_error& e) {
        throw PipelineError(std::string("response is not valid JSON: ") + e.what());
    }
    auto boxes = parse_detect_response(response, request_id, region.width(), region.height());
    for (auto& b : boxes) {
        b.model_id = model_id_;
    }
    return boxes;
}

}  // namespace entroseg
