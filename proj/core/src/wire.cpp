#include "bcsimplex/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <json.hpp>

#include "bcsimplex/error.hpp"

namespace bcsimplex::wire {

namespace {

using nlohmann::json;

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

int remaining_ms(Clock::time_point deadline)
{
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

sockaddr_in resolve(const Endpoint& e)
{
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(e.port));
    const std::string host = e.host.empty() || e.host == "localhost" ? "127.0.0.1" : e.host;
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) throw TransportError("cannot resolve host '" + host + "'");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

void no_delay(int fd)
{
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

std::string number(double v)
{
    if (!std::isfinite(v)) throw TransportError("cannot send a non-finite number");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string numbers(std::span<const double> v)
{
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + number(v[i]);
    return out + "]";
}

json parse(std::string_view line)
{
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw TransportError("malformed message: " + std::string(line.substr(0, 200)));
    if (!j.contains("type") || !j["type"].is_string()) throw TransportError("message without a type: " + std::string(line.substr(0, 200)));
    return j;
}

json expect(std::string_view line, const char* type)
{
    json j = parse(line);
    if (j["type"] != type) throw TransportError(std::string("expected a '") + type + "' message, got '" + j["type"].get<std::string>() + "'");
    return j;
}

std::vector<double> real_array(const json& j, const char* key)
{
    if (!j.contains(key) || !j[key].is_array()) throw TransportError(std::string("message field '") + key + "' must be an array");
    std::vector<double> out;
    for (const auto& v : j[key]) {
        if (!v.is_number()) throw TransportError(std::string("message field '") + key + "' must hold numbers");
        out.push_back(v.get<double>());
        if (!std::isfinite(out.back())) throw TransportError(std::string("message field '") + key + "' holds a non-finite number");
    }
    return out;
}

double real(const json& j, const char* key)
{
    if (!j.contains(key) || !j[key].is_number()) throw TransportError(std::string("message field '") + key + "' must be a number");
    return j[key].get<double>();
}

} // namespace

Endpoint parse_endpoint(std::string_view text)
{
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos) throw ValidationError("endpoint must look like host:port, got '" + std::string(text) + "'");
    Endpoint e;
    if (colon > 0) e.host = std::string(text.substr(0, colon));
    const std::string port(text.substr(colon + 1));
    try {
        std::size_t used = 0;
        e.port = std::stoi(port, &used);
        if (used != port.size() || e.port < 0 || e.port > 65535) throw std::out_of_range("port");
    } catch (const std::exception&) {
        throw ValidationError("bad port in endpoint '" + std::string(text) + "'");
    }
    return e;
}

LineStream::LineStream(int fd) : fd_(fd) {}

LineStream::LineStream(LineStream&& other) noexcept : fd_(other.fd_), buffer_(std::move(other.buffer_)) { other.fd_ = -1; }

LineStream& LineStream::operator=(LineStream&& other) noexcept
{
    if (this != &other) {
        close();
        fd_ = other.fd_;
        buffer_ = std::move(other.buffer_);
        other.fd_ = -1;
    }
    return *this;
}

LineStream::~LineStream() { close(); }

void LineStream::close()
{
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void LineStream::send(std::string_view line)
{
    if (fd_ < 0) throw TransportError("connection is closed");
    std::string data(line);
    data += '\n';
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(sys_error("send failed"));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::optional<std::string> LineStream::receive(Clock::time_point deadline)
{
    if (fd_ < 0) throw TransportError("connection is closed");
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, remaining_ms(deadline));
        if (r < 0) {
            if (errno == EINTR) continue;
            throw TransportError(sys_error("poll failed"));
        }
        if (r == 0) return std::nullopt;
        char chunk[4096];
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(sys_error("receive failed"));
        }
        if (n == 0) throw TransportError("connection closed by peer");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

Listener::Listener(const Endpoint& at)
{
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw TransportError(sys_error("socket failed"));
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = resolve(at);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        const std::string msg = sys_error("cannot bind " + at.host + ":" + std::to_string(at.port));
        ::close(fd_);
        throw TransportError(msg);
    }
    if (::listen(fd_, 1) < 0) {
        const std::string msg = sys_error("listen failed");
        ::close(fd_);
        throw TransportError(msg);
    }
    socklen_t len = sizeof addr;
    getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Listener::~Listener()
{
    if (fd_ >= 0) ::close(fd_);
}

LineStream Listener::accept(std::chrono::duration<double> timeout)
{
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout);
    while (true) {
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, remaining_ms(deadline));
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) throw TransportError(sys_error("poll failed"));
        if (r == 0) throw TransportError("no client connected within " + std::to_string(timeout.count()) + " s");
        const int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (c < 0) {
            if (errno == EINTR || errno == ECONNABORTED) continue;
            throw TransportError(sys_error("accept failed"));
        }
        no_delay(c);
        return LineStream(c);
    }
}

LineStream connect(const Endpoint& to, std::chrono::duration<double> timeout)
{
    const sockaddr_in addr = resolve(to);
    const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout);
    while (true) {
        const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
        if (fd < 0) throw TransportError(sys_error("socket failed"));
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
            no_delay(fd);
            return LineStream(fd);
        }
        const int err = errno;
        ::close(fd);
        if ((err != ECONNREFUSED && err != EINTR) || Clock::now() >= deadline) {
            errno = err;
            throw TransportError(sys_error("cannot connect to " + to.host + ":" + std::to_string(to.port)));
        }
        // server may not be listening yet
        ::poll(nullptr, 0, 20);
    }
}

std::string encode(const Hello& m)
{
    return "{\"type\":\"hello\",\"states\":" + json(m.states).dump() + ",\"inputs\":" + json(m.inputs).dump() + ",\"eta\":" + number(m.eta) + "}";
}

std::string encode_ready() { return R"({"type":"ready"})"; }

std::string encode(const StateMsg& m) { return "{\"type\":\"state\",\"t\":" + number(m.t) + ",\"x\":" + numbers(m.x) + "}"; }

std::string encode(const ActionMsg& m)
{
    std::string out = "{\"type\":\"action\",\"u\":" + numbers(m.u);
    if (m.t) out += ",\"t\":" + number(*m.t);
    return out + "}";
}

std::string message_type(std::string_view line) { return parse(line)["type"].get<std::string>(); }

Hello decode_hello(std::string_view line)
{
    const json j = expect(line, "hello");
    Hello h;
    try {
        h.states = j.at("states").get<std::vector<std::string>>();
        h.inputs = j.at("inputs").get<std::vector<std::string>>();
    } catch (const json::exception&) {
        throw TransportError("hello message needs string arrays 'states' and 'inputs'");
    }
    h.eta = real(j, "eta");
    return h;
}

void decode_ready(std::string_view line) { (void)expect(line, "ready"); }

StateMsg decode_state(std::string_view line)
{
    const json j = expect(line, "state");
    return {real(j, "t"), real_array(j, "x")};
}

ActionMsg decode_action(std::string_view line)
{
    const json j = expect(line, "action");
    ActionMsg a;
    a.u = real_array(j, "u");
    if (j.contains("t")) a.t = real(j, "t");
    return a;
}

void server_handshake(LineStream& s, const Hello& hello, std::chrono::duration<double> timeout)
{
    s.send(encode(hello));
    const auto line = s.receive(timeout);
    if (!line) throw TransportError("client did not answer the hello message");
    decode_ready(*line);
}

Hello client_handshake(LineStream& s, std::chrono::duration<double> timeout)
{
    const auto line = s.receive(timeout);
    if (!line) throw TransportError("server sent no hello message");
    Hello h = decode_hello(*line);
    s.send(encode_ready());
    return h;
}

} // namespace bcsimplex::wire
