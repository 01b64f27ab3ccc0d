#pragma once

// Byte links between the gateway and the pump.  The in-process channel keeps
// frame boundaries (one chunk per write); the TCP port is a plain stream and
// reassembles chunks with pump::FrameAssembler.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>

#include "siot/bytes.hpp"
#include "siot/pump.hpp"

namespace siot::link {

class SerialPort {
  public:
    virtual ~SerialPort() = default;
    virtual void write(ByteView bytes) = 0;
    // One frame-sized chunk, or nullopt once `timeout` passes with nothing.
    virtual std::optional<Bytes> read(std::chrono::milliseconds timeout) = 0;
    virtual bool closed() const { return false; }
};

/// Two frame queues joined back to back.  `on_pump_rx` runs synchronously
/// after every gateway-side write so a simulated pump answers before the
/// gateway's next read.
class InProcessSerial {
  public:
    InProcessSerial();
    InProcessSerial(const InProcessSerial&) = delete;
    InProcessSerial& operator=(const InProcessSerial&) = delete;

    SerialPort& gateway_end() { return gateway_end_; }
    SerialPort& pump_end() { return pump_end_; }

    std::function<void()> on_pump_rx;

    // Test hook: mutate the next chunk travelling towards the gateway.
    std::function<void(Bytes&)> gateway_rx_filter;

  private:
    class End final : public SerialPort {
      public:
        End(std::deque<Bytes>& in, std::deque<Bytes>& out, std::function<void()>* after_write,
            std::function<void(Bytes&)>* rx_filter)
            : in_(in), out_(out), after_write_(after_write), rx_filter_(rx_filter) {}
        void write(ByteView bytes) override;
        std::optional<Bytes> read(std::chrono::milliseconds timeout) override;

      private:
        std::deque<Bytes>& in_;
        std::deque<Bytes>& out_;
        std::function<void()>* after_write_;
        std::function<void(Bytes&)>* rx_filter_;
    };

    std::deque<Bytes> to_pump_;
    std::deque<Bytes> to_gateway_;
    End gateway_end_;
    End pump_end_;
};

/// Stream socket carrying serial frames.
class TcpSerialPort final : public SerialPort {
  public:
    explicit TcpSerialPort(int fd);
    ~TcpSerialPort() override;
    TcpSerialPort(TcpSerialPort&& other) noexcept;
    TcpSerialPort& operator=(TcpSerialPort&& other) noexcept;
    TcpSerialPort(const TcpSerialPort&) = delete;

    static TcpSerialPort connect(const std::string& host, std::uint16_t port,
                                 std::chrono::milliseconds timeout = std::chrono::seconds(5));

    void write(ByteView bytes) override;
    std::optional<Bytes> read(std::chrono::milliseconds timeout) override;
    bool closed() const override { return closed_; }

  private:
    int fd_ = -1;
    bool closed_ = false;
    pump::FrameAssembler assembler_;
};

class TcpListener {
  public:
    TcpListener(const std::string& host, std::uint16_t port);  // port 0 picks a free one
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    std::optional<TcpSerialPort> accept(std::chrono::milliseconds timeout);

  private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// "host:port" → parts; throws ParseError.
std::pair<std::string, std::uint16_t> split_host_port(const std::string& endpoint);

}  // namespace siot::link
