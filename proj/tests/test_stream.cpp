#include "support.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>

#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

using namespace lorm;
using lorm::testing::random_series;
using lorm::testing::series_csv;

namespace {

std::vector<SignalWindow> drain(WindowStream& s) {
  std::vector<SignalWindow> out;
  while (auto w = s.next()) out.push_back(std::move(*w));
  return out;
}

void expect_same(const std::vector<SignalWindow>& a, const std::vector<SignalWindow>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].start_index, b[i].start_index);
    EXPECT_EQ(a[i].data, b[i].data) << "window " << i;
  }
}

/// Serves `payload` to the first client on a loopback port, in small writes.
class OneShotServer {
public:
  explicit OneShotServer(std::string payload) : payload_(std::move(payload)) {
    listener_ = FileDescriptor(::socket(AF_INET, SOCK_STREAM, 0));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listener_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listener_.get(), 1) != 0)
      throw std::runtime_error("test server: bind/listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(listener_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] {
      FileDescriptor client(::accept(listener_.get(), nullptr, nullptr));
      std::mt19937_64 rng(17);
      std::size_t pos = 0;
      while (pos < payload_.size()) {
        const std::size_t n = std::min<std::size_t>(1 + rng() % 700, payload_.size() - pos);
        const ssize_t sent = ::send(client.get(), payload_.data() + pos, n, MSG_NOSIGNAL);
        if (sent <= 0) break;
        pos += static_cast<std::size_t>(sent);
      }
    });
  }
  ~OneShotServer() { thread_.join(); }
  std::uint16_t port() const { return port_; }

private:
  std::string payload_;
  FileDescriptor listener_;
  std::uint16_t port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Stream, FileReplayEqualsBatch) {
  const auto s = random_series(963, 3, 8);
  const auto path = (std::filesystem::temp_directory_path() / "lorm_stream_test.csv").string();
  write_signal_csv(path, s);
  WindowStream ws(std::make_unique<FileByteSource>(path), {321, 320, 321});
  const auto streamed = drain(ws);
  EXPECT_EQ(streamed.size(), 3u);
  EXPECT_EQ(ws.channel_names(), s.channel_names);
  expect_same(streamed, segment_windows(read_signal_csv(path, 1.0), {321, 320, 321}));
  std::filesystem::remove(path);
}

TEST(Stream, ChunkingNeverChangesWindows) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t W = 2 + rng() % 40, stride = 1 + rng() % 60, T = rng() % 400;
    const WindowingConfig cfg{W, W - 1, stride};
    const auto s = random_series(static_cast<Eigen::Index>(std::max<std::size_t>(T, 1)), 1 + rng() % 3, trial);
    const std::string csv = series_csv(s);
    std::vector<std::size_t> chunks;
    for (int i = 0; i < 7; ++i) chunks.push_back(1 + rng() % 97);
    WindowStream ws(std::make_unique<MemoryByteSource>(csv, chunks), cfg);
    std::istringstream in(csv);
    expect_same(drain(ws), segment_windows(read_signal_csv(in, 1.0), cfg));
  }
}

TEST(Stream, PartialFinalWindowNotEmitted) {
  const auto s = random_series(700, 2, 1);
  WindowStream ws(std::make_unique<MemoryByteSource>(series_csv(s)), {321, 320, 321});
  EXPECT_EQ(drain(ws).size(), 2u);
}

TEST(Stream, MissingTrailingNewlineStillReadsLastRow) {
  std::string csv = series_csv(random_series(642, 1, 4));
  csv.pop_back();
  WindowStream ws(std::make_unique<MemoryByteSource>(csv), {321, 320, 321});
  EXPECT_EQ(drain(ws).size(), 2u);
}

TEST(Stream, MalformedRecordReportsIndex) {
  WindowStream ws(std::make_unique<MemoryByteSource>("a,b\n1,2\n3,4\n5,oops\n"), {2, 1, 1});
  ASSERT_TRUE(ws.next().has_value());
  try {
    drain(ws);
    FAIL();
  } catch (const StreamError& e) {
    EXPECT_EQ(e.record(), 3u);
  }
  WindowStream short_row(std::make_unique<MemoryByteSource>("a,b\n1,2\n3\n"), {2, 1, 1});
  EXPECT_THROW(drain(short_row), StreamError);
}

TEST(Stream, SocketFeedEqualsBatch) {
  const auto s = random_series(963, 3, 12);
  std::string csv = series_csv(s);
  const std::string body = csv.substr(csv.find('\n') + 1);
  OneShotServer server(body);
  WindowStream ws(std::make_unique<SocketByteSource>("127.0.0.1", server.port()), {321, 320, 321},
                  StreamFormat{false, 3});
  expect_same(drain(ws), segment_windows(s, {321, 320, 321}));
}

TEST(Stream, EndpointParsing) {
  const auto [host, port] = parse_endpoint("localhost:9000");
  EXPECT_EQ(host, "localhost");
  EXPECT_EQ(port, 9000);
  EXPECT_THROW(parse_endpoint("nohost"), Error);
  EXPECT_THROW(parse_endpoint("h:99999"), Error);
}

TEST(BlockingQueue, PreservesOrderAcrossThreads) {
  BlockingQueue<int> q(4);
  std::thread producer([&] {
    for (int i = 0; i < 1000; ++i) q.push(i);
    q.close();
  });
  int expected = 0;
  while (auto v = q.pop()) EXPECT_EQ(*v, expected++);
  producer.join();
  EXPECT_EQ(expected, 1000);
}
