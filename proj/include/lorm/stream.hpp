#pragma once

#include "lorm/signal_io.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>

namespace lorm {

/// Malformed record in a sample stream. `record()` is the 1-based data row.
class StreamError : public Error {
public:
  StreamError(std::size_t record, const std::string& what)
      : Error("stream record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const { return record_; }

private:
  std::size_t record_;
};

/// Delivers raw bytes in arbitrary chunks. read() returns 0 at end of stream.
class ByteSource {
public:
  virtual ~ByteSource() = default;
  virtual std::size_t read(std::span<char> buffer) = 0;
};

class FileByteSource final : public ByteSource {
public:
  explicit FileByteSource(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open stream file: " + path);
  }
  std::size_t read(std::span<char> buffer) override {
    in_.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    return static_cast<std::size_t>(in_.gcount());
  }

private:
  std::ifstream in_;
};

/// In-memory bytes served with caller-chosen chunk sizes (cycled).
class MemoryByteSource final : public ByteSource {
public:
  explicit MemoryByteSource(std::string data, std::vector<std::size_t> chunk_sizes = {4096})
      : data_(std::move(data)), chunks_(std::move(chunk_sizes)) {
    if (chunks_.empty()) chunks_.push_back(4096);
  }
  std::size_t read(std::span<char> buffer) override {
    if (pos_ >= data_.size()) return 0;
    std::size_t n = std::max<std::size_t>(1, chunks_[next_++ % chunks_.size()]);
    n = std::min({n, buffer.size(), data_.size() - pos_});
    std::memcpy(buffer.data(), data_.data() + pos_, n);
    pos_ += n;
    return n;
  }

private:
  std::string data_;
  std::vector<std::size_t> chunks_;
  std::size_t next_ = 0;
  std::size_t pos_ = 0;
};

class FileDescriptor {
public:
  FileDescriptor() = default;
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  FileDescriptor(FileDescriptor&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileDescriptor& operator=(FileDescriptor&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~FileDescriptor() { reset(); }
  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

private:
  int fd_ = -1;
};

/// TCP client; the peer closing the connection ends the stream.
class SocketByteSource final : public ByteSource {
public:
  SocketByteSource(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port_text = std::to_string(port);
    if (int rc = ::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res); rc != 0)
      throw Error("socket: cannot resolve " + host + ": " + ::gai_strerror(rc));
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    for (addrinfo* p = res; p; p = p->ai_next) {
      FileDescriptor fd(::socket(p->ai_family, p->ai_socktype, p->ai_protocol));
      if (!fd) continue;
      if (::connect(fd.get(), p->ai_addr, p->ai_addrlen) == 0) {
        fd_ = std::move(fd);
        return;
      }
    }
    throw Error("socket: cannot connect to " + host + ":" + port_text);
  }
  std::size_t read(std::span<char> buffer) override {
    while (true) {
      const ssize_t n = ::recv(fd_.get(), buffer.data(), buffer.size(), 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno != EINTR) throw Error("socket: receive failed");
    }
  }

private:
  FileDescriptor fd_;
};

/// Parses "host:port".
inline std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon + 1 == endpoint.size())
    throw ConfigError("endpoint must look like host:port, got '" + endpoint + "'");
  double port = 0;
  if (!parse_double(std::string_view(endpoint).substr(colon + 1), port) || port < 1 || port > 65535 ||
      port != std::floor(port))
    throw ConfigError("invalid port in endpoint '" + endpoint + "'");
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

struct StreamFormat {
  /// First line carries channel names (signal CSV); socket feeds have none.
  bool has_header = true;
  /// Required when there is no header.
  std::size_t channels = 0;
};

/// Turns a chunked byte source into the sequence of complete windows.
/// The output depends only on the byte content, never on chunk boundaries.
class WindowStream {
public:
  WindowStream(std::unique_ptr<ByteSource> source, WindowingConfig cfg, StreamFormat format = {})
      : source_(std::move(source)), cfg_(cfg), format_(format) {
    cfg_.validate();
    if (!format_.has_header) {
      if (format_.channels == 0) throw ConfigError("stream: channel count required without header");
      for (std::size_t c = 0; c < format_.channels; ++c) names_.push_back("ch" + std::to_string(c));
    }
  }

  /// Channel names; for headered sources they are known after the first next().
  const std::vector<std::string>& channel_names() const { return names_; }
  std::size_t records_read() const { return record_; }

  std::optional<SignalWindow> next() {
    while (true) {
      if (auto w = try_emit()) return w;
      if (!pull_line()) return std::nullopt;
    }
  }

private:
  std::optional<SignalWindow> try_emit() {
    const std::size_t C = names_.size();
    if (C == 0 || buffered_rows() < cfg_.window_len) return std::nullopt;
    SignalWindow w;
    w.start_index = head_index_;
    w.data = ConstMatrixMap(buf_.data() + head_row_ * C, static_cast<Eigen::Index>(cfg_.window_len),
                            static_cast<Eigen::Index>(C));
    // Advance by stride; rows beyond the buffer are skipped as they arrive.
    const std::size_t drop = std::min(cfg_.stride, buffered_rows());
    head_row_ += drop;
    head_index_ += cfg_.stride;
    skip_ = cfg_.stride - drop;
    if (head_row_ * 2 > total_rows()) compact();
    return w;
  }

  std::size_t total_rows() const { return names_.empty() ? 0 : buf_.size() / names_.size(); }
  std::size_t buffered_rows() const { return total_rows() - head_row_; }

  void compact() {
    const std::size_t C = names_.size();
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_row_ * C));
    head_row_ = 0;
  }

  bool next_raw_line(std::string& line) {
    while (true) {
      const auto nl = pending_.find('\n', scan_);
      if (nl != std::string::npos) {
        line.assign(pending_, line_start_, nl - line_start_);
        line_start_ = scan_ = nl + 1;
        return true;
      }
      pending_.erase(0, line_start_);
      line_start_ = 0;
      scan_ = pending_.size();
      if (eof_) {
        if (pending_.empty()) return false;
        line.swap(pending_);
        pending_.clear();
        scan_ = 0;
        return true;
      }
      char chunk[8192];
      const std::size_t n = source_->read(chunk);
      if (n == 0)
        eof_ = true;
      else
        pending_.append(chunk, n);
    }
  }

  bool pull_line() {
    std::string line;
    while (next_raw_line(line)) {
      if (format_.has_header && !header_done_) {
        if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
          line.erase(0, 3);
        for (auto f : split_fields(line)) names_.push_back(trim(f));
        header_done_ = true;
        continue;
      }
      if (trim(line).empty()) continue;
      ++record_;
      const auto fields = split_fields(line);
      const std::size_t C = names_.size();
      if (fields.size() != C)
        throw StreamError(record_, "has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(C));
      if (skip_ > 0) {
        // still validate skipped rows
        for (auto f : fields) {
          double v;
          if (!parse_double(f, v) || !std::isfinite(v)) throw StreamError(record_, "non-numeric field '" + trim(f) + "'");
        }
        --skip_;
        continue;
      }
      for (auto f : fields) {
        double v = 0.0;
        if (!parse_double(f, v) || !std::isfinite(v)) throw StreamError(record_, "non-numeric field '" + trim(f) + "'");
        buf_.push_back(v);
      }
      return true;
    }
    return false;
  }

  std::unique_ptr<ByteSource> source_;
  WindowingConfig cfg_;
  StreamFormat format_;
  std::vector<std::string> names_;
  bool header_done_ = false;
  bool eof_ = false;
  std::string pending_;
  std::size_t scan_ = 0;
  std::size_t line_start_ = 0;
  std::size_t record_ = 0;
  std::vector<double> buf_;
  std::size_t head_row_ = 0;
  std::size_t head_index_ = 0;
  std::size_t skip_ = 0;
};

inline WindowStream stream_windows(std::unique_ptr<ByteSource> source, const WindowingConfig& cfg,
                                   StreamFormat format = {}) {
  return WindowStream(std::move(source), cfg, format);
}

/// Single-producer/single-consumer FIFO used to hand windows from an ingest
/// thread to the inference thread. close() marks end of stream.
template <typename T>
class BlockingQueue {
public:
  explicit BlockingQueue(std::size_t capacity = 64) : capacity_(std::max<std::size_t>(1, capacity)) {}

  void push(T value) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
};

}  // namespace lorm
