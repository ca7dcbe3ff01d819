#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bcsimplex::wire {

using Clock = std::chrono::steady_clock;

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;
};

/// "host:port" or ":port" (loopback).
Endpoint parse_endpoint(std::string_view text);

/// Newline-delimited byte stream over a connected TCP socket. Owns the fd.
class LineStream {
public:
    LineStream() = default;
    explicit LineStream(int fd);
    LineStream(LineStream&& other) noexcept;
    LineStream& operator=(LineStream&& other) noexcept;
    LineStream(const LineStream&) = delete;
    LineStream& operator=(const LineStream&) = delete;
    ~LineStream();

    /// Write one line (newline appended). Throws TransportError.
    void send(std::string_view line);
    /// Next line without its newline, or nullopt if the deadline passes first.
    /// Throws TransportError when the peer closes or the socket fails.
    std::optional<std::string> receive(Clock::time_point deadline);
    std::optional<std::string> receive(std::chrono::duration<double> timeout) { return receive(Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout)); }

    [[nodiscard]] bool is_open() const { return fd_ >= 0; }
    void close();

private:
    int fd_ = -1;
    std::string buffer_;
};

/// Listening TCP socket.
class Listener {
public:
    explicit Listener(const Endpoint& at);
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;
    ~Listener();

    /// Bound port (useful when listening on port 0).
    [[nodiscard]] int port() const { return port_; }
    /// Wait for one client; throws TransportError on timeout.
    LineStream accept(std::chrono::duration<double> timeout);

private:
    int fd_ = -1;
    int port_ = 0;
};

LineStream connect(const Endpoint& to, std::chrono::duration<double> timeout = std::chrono::seconds(5));

// ---------------------------------------------------------------------------
// Messages

struct Hello {
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    double eta = 0.0;
};

struct StateMsg {
    double t = 0.0;
    std::vector<double> x;
};

struct ActionMsg {
    std::vector<double> u;
    std::optional<double> t; ///< echo of the state's t; lets the server drop stale replies
};

std::string encode(const Hello& m);
std::string encode_ready();
std::string encode(const StateMsg& m);
std::string encode(const ActionMsg& m);

/// Message type field; throws TransportError on malformed JSON.
std::string message_type(std::string_view line);
Hello decode_hello(std::string_view line);
void decode_ready(std::string_view line);
StateMsg decode_state(std::string_view line);
ActionMsg decode_action(std::string_view line);

/// Server half of the handshake: send hello, wait for ready.
void server_handshake(LineStream& s, const Hello& hello, std::chrono::duration<double> timeout);
/// Client half: read hello, reply ready.
Hello client_handshake(LineStream& s, std::chrono::duration<double> timeout);

} // namespace bcsimplex::wire
