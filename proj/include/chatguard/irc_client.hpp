#pragma once

#include <netdb.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <functional>
#include <random>
#include <string>

#include "chatguard/chat_ingest.hpp"

namespace chatguard {

struct IrcConfig {
  std::string host = "irc.chat.twitch.tv";
  std::string port = "6667";
  std::vector<std::string> channels;
  std::string nick;  // empty: anonymous justinfanNNNNN
};

/// Plain-text IRC reader with the tags capability. Blocks until the server
/// closes the connection or `stop` becomes true; PINGs are answered. Lines
/// that are not parseable PRIVMSGs are ignored.
inline std::size_t run_irc_reader(const IrcConfig& cfg, const MessageSink& sink, const std::atomic<bool>& stop) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(cfg.host.c_str(), cfg.port.c_str(), &hints, &res); rc != 0) {
    throw Error(Errc::client_error, "cannot resolve " + cfg.host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* p = res; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(Errc::client_error, "cannot connect to " + cfg.host + ":" + cfg.port);

  timeval tv{0, 250000};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);

  auto send_line = [fd](const std::string& s) {
    const std::string line = s + "\r\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t w = ::send(fd, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (w <= 0) throw Error(Errc::client_error, "IRC send failed");
      off += static_cast<std::size_t>(w);
    }
  };

  std::string nick = cfg.nick;
  if (nick.empty()) nick = "justinfan" + std::to_string(10000 + std::random_device{}() % 90000);
  std::size_t delivered = 0;
  try {
    send_line("CAP REQ :twitch.tv/tags twitch.tv/commands");
    send_line("PASS SCHMOOPIIE");
    send_line("NICK " + nick);
    for (const auto& ch : cfg.channels) send_line("JOIN #" + (ch.starts_with('#') ? ch.substr(1) : ch));

    std::string buffer;
    char chunk[4096];
    while (!stop.load()) {
      const ssize_t r = ::recv(fd, chunk, sizeof chunk, 0);
      if (r == 0) break;
      if (r < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
        throw Error(Errc::client_error, std::string("IRC recv failed: ") + std::strerror(errno));
      }
      buffer.append(chunk, static_cast<std::size_t>(r));
      for (std::size_t nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n')) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.starts_with("PING")) {
          send_line("PONG" + line.substr(4));
          continue;
        }
        try {
          ChatMessage m = parse_irc_line(line);
          if (m.timestamp_ms == 0) {
            m.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count();
          }
          sink(m);
          ++delivered;
        } catch (const Error&) {
        }
      }
    }
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  return delivered;
}

}  // namespace chatguard
