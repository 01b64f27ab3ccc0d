#include "siot/serial_link.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <utility>

namespace siot::link {

// ---- in-process ----

InProcessSerial::InProcessSerial()
    : gateway_end_(to_gateway_, to_pump_, &on_pump_rx, &gateway_rx_filter),
      pump_end_(to_pump_, to_gateway_, nullptr, nullptr) {}

void InProcessSerial::End::write(ByteView bytes) {
    out_.emplace_back(bytes.begin(), bytes.end());
    if (after_write_ && *after_write_) (*after_write_)();
}

std::optional<Bytes> InProcessSerial::End::read(std::chrono::milliseconds) {
    if (in_.empty()) return std::nullopt;
    Bytes chunk = std::move(in_.front());
    in_.pop_front();
    if (rx_filter_ && *rx_filter_) (*rx_filter_)(chunk);
    return chunk;
}

// ---- TCP ----

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
    throw IoError(what + ": " + std::strerror(errno));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
        throw ParseError("cannot resolve host " + host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

}  // namespace

TcpSerialPort::TcpSerialPort(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpSerialPort::~TcpSerialPort() {
    if (fd_ >= 0) ::close(fd_);
}

TcpSerialPort::TcpSerialPort(TcpSerialPort&& other) noexcept
    : fd_(other.fd_), closed_(other.closed_), assembler_(std::move(other.assembler_)) {
    other.fd_ = -1;
}

TcpSerialPort& TcpSerialPort::operator=(TcpSerialPort&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = std::exchange(other.fd_, -1);
        closed_ = other.closed_;
        assembler_ = std::move(other.assembler_);
    }
    return *this;
}

TcpSerialPort TcpSerialPort::connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
    const auto addr = resolve(host, port);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw_errno("socket");
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) return TcpSerialPort(fd);
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline) throw_errno("connect to " + host);
        ::usleep(50'000);
    }
}

void TcpSerialPort::write(ByteView bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            closed_ = true;
            return;
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::optional<Bytes> TcpSerialPort::read(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto chunk = assembler_.next()) return chunk;
        if (closed_) return std::nullopt;
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, static_cast<int>(std::max<long long>(0, left.count())));
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) return std::nullopt;
        std::uint8_t buf[4096];
        const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
        if (n <= 0) {
            closed_ = true;
            continue;
        }
        assembler_.feed(ByteView(buf, static_cast<std::size_t>(n)));
    }
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw_errno("socket");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto addr = resolve(host, port);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) throw_errno("bind");
    if (::listen(fd_, 4) != 0) throw_errno("listen");
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::optional<TcpSerialPort> TcpListener::accept(std::chrono::milliseconds timeout) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return std::nullopt;
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) return std::nullopt;
    return TcpSerialPort(fd);
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size()) {
        throw ParseError("endpoint must be host:port, got " + endpoint);
    }
    const std::string port_text = endpoint.substr(colon + 1);
    char* end = nullptr;
    const long port = std::strtol(port_text.c_str(), &end, 10);
    if (*end != '\0' || port < 0 || port > 65535) throw ParseError("bad port in " + endpoint);
    return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace siot::link
