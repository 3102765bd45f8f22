#include "cryptosynth/pii/sidecar.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <thread>

#include <httplib.h>

#include "cryptosynth/common/io.hpp"
#include "cryptosynth/common/unicode.hpp"
#include "cryptosynth/llm/mock.hpp"

namespace cryptosynth::pii {

namespace {

void require(bool cond, const std::string& detail) {
  if (!cond) throw ProtocolViolation(detail);
}

bool is_ascii_alnum(char32_t c) { return c < 0x80 && std::isalnum(static_cast<int>(c)); }

}  // namespace

void validate_response(const std::string& op, const nlohmann::json& r) {
  require(r.is_object(), "response is not a JSON object");
  require(r.contains("ok") && r["ok"].is_boolean(), "response lacks boolean \"ok\"");
  if (!r["ok"].get<bool>()) {
    require(r.contains("error") && r["error"].is_string(), "error response lacks string \"error\"");
    return;
  }
  if (op == "ner") {
    require(r.contains("spans") && r["spans"].is_array(), "ner response lacks \"spans\" array");
    for (const auto& s : r["spans"]) {
      require(s.is_object(), "span is not an object");
      require(s.contains("start") && s["start"].is_number_integer(), "span lacks integer \"start\"");
      require(s.contains("end") && s["end"].is_number_integer(), "span lacks integer \"end\"");
      require(s.contains("type") && s["type"].is_string(), "span lacks string \"type\"");
      require(!s.contains("surface") || s["surface"].is_string(), "span \"surface\" is not a string");
      require(!s.contains("score") || s["score"].is_number(), "span \"score\" is not a number");
    }
  } else if (op == "embed") {
    require(r.contains("vectors") && r["vectors"].is_array(), "embed response lacks \"vectors\" array");
    std::size_t dim = 0;
    for (const auto& v : r["vectors"]) {
      require(v.is_array() && !v.empty(), "vector is not a non-empty array");
      if (dim == 0) dim = v.size();
      require(v.size() == dim, "vectors have differing dimensions");
      for (const auto& x : v) require(x.is_number(), "vector holds a non-number");
    }
    if (r.contains("dim") && dim != 0) {
      require(r["dim"].is_number_integer() && r["dim"].get<std::size_t>() == dim, "\"dim\" disagrees with vectors");
    }
  } else if (op == "health") {
    require(r.contains("status") && r["status"].is_object(), "health response lacks \"status\" object");
  }
}

nlohmann::json SidecarClient::call(const nlohmann::json& request) {
  const std::string op = request.value("op", "");
  std::string raw;
  {
    std::lock_guard lock(mu_);
    raw = exchange(request.dump());
  }
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolViolation("response is not JSON: " + raw.substr(0, 120));
  }
  validate_response(op, response);
  if (!response["ok"].get<bool>()) {
    throw ProtocolViolation("sidecar refused op '" + op + "': " + response["error"].get<std::string>());
  }
  return response;
}

nlohmann::json SidecarClient::health() { return call({{"op", "health"}})["status"]; }

nlohmann::json SidecarClient::ner(const std::string& text, const std::string& lang) {
  return call({{"op", "ner"}, {"text", text}, {"lang", lang}})["spans"];
}

std::vector<llm::EmbeddingVector> SidecarClient::embed(const std::vector<std::string>& texts) {
  const auto r = call({{"op", "embed"}, {"texts", texts}});
  auto vectors = r["vectors"].get<std::vector<llm::EmbeddingVector>>();
  require(vectors.size() == texts.size(), "embed returned " + std::to_string(vectors.size()) + " vectors for " +
                                              std::to_string(texts.size()) + " texts");
  return vectors;
}

StdioSidecarClient::StdioSidecarClient(std::vector<std::string> argv, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  if (argv.empty()) throw SidecarUnavailable("empty sidecar command");
  std::vector<char*> cargv;
  for (auto& a : argv) cargv.push_back(a.data());
  cargv.push_back(nullptr);

  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw SidecarUnavailable(std::string("socketpair: ") + std::strerror(errno));
  }
  int status[2];
  if (::pipe2(status, O_CLOEXEC) != 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw SidecarUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {sv[0], sv[1], status[0], status[1]}) ::close(fd);
    throw SidecarUnavailable(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execvp(cargv[0], cargv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(status[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(sv[1]);
  ::close(status[1]);
  int err = 0;
  const auto n = ::read(status[0], &err, sizeof err);
  ::close(status[0]);
  if (n == static_cast<ssize_t>(sizeof err)) {
    ::close(sv[0]);
    ::waitpid(pid, nullptr, 0);
    throw SidecarUnavailable("cannot exec '" + argv[0] + "': " + std::strerror(err));
  }
  fd_ = sv[0];
  pid_ = pid;
}

StdioSidecarClient::~StdioSidecarClient() { shutdown(); }

void StdioSidecarClient::shutdown() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
}

std::string StdioSidecarClient::exchange(const std::string& body) {
  if (fd_ < 0) throw SidecarUnavailable("sidecar process is not running");
  const std::string line = body + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const auto n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      shutdown();
      throw SidecarUnavailable("write to sidecar failed: " + why);
    }
    sent += static_cast<std::size_t>(n);
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return reply;
    }
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      shutdown();
      throw SidecarUnavailable("sidecar did not answer within " + std::to_string(timeout_.count()) + " ms");
    }
    pollfd p{fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) continue;
    char chunk[4096];
    const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      shutdown();
      throw SidecarUnavailable("sidecar closed its output");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

HttpSidecarClient::HttpSidecarClient(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpSidecarClient::exchange(const std::string& body) {
  const auto scheme = base_url_.find("://");
  if (scheme == std::string::npos) throw SidecarUnavailable("sidecar URL without scheme: " + base_url_);
  const auto path_at = base_url_.find('/', scheme + 3);
  const std::string origin = base_url_.substr(0, path_at);
  const std::string prefix = path_at == std::string::npos ? "" : base_url_.substr(path_at);
  httplib::Client client(origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  auto res = client.Post(prefix + "/v1/op", body, "application/json");
  if (!res) throw SidecarUnavailable("sidecar at " + base_url_ + ": " + httplib::to_string(res.error()));
  return res->body;
}

std::string InProcessSidecarClient::exchange(const std::string& body) {
  return handler_(nlohmann::json::parse(body)).dump();
}

MockSidecar::MockSidecar(std::vector<std::pair<std::string, EntityType>> gazetteer, std::size_t dim)
    : gazetteer_(std::move(gazetteer)), dim_(dim) {
  std::erase_if(gazetteer_, [](const auto& g) { return g.first.empty(); });
  std::stable_sort(gazetteer_.begin(), gazetteer_.end(), [](const auto& a, const auto& b) {
    const auto la = unicode::codepoint_length(a.first), lb = unicode::codepoint_length(b.first);
    return la != lb ? la > lb : a.first < b.first;
  });
}

MockSidecar MockSidecar::from_gazetteer_file(const std::filesystem::path& path, std::size_t dim) {
  std::vector<std::pair<std::string, EntityType>> entries;
  for (const auto& item : io::read_json(path)) {
    const auto type = parse_entity_type(item.at("type").get<std::string>());
    if (!type) throw InvalidSpan("gazetteer entry has unknown type " + item.at("type").dump());
    entries.emplace_back(item.at("surface").get<std::string>(), *type);
  }
  return MockSidecar(std::move(entries), dim);
}

nlohmann::json MockSidecar::handle(const nlohmann::json& req) const {
  const std::string op = req.value("op", "");
  if (op == "health") {
    return {{"ok", true},
            {"status", {{"ner_model", "mock-gazetteer"}, {"embed_model", "mock-hash"}, {"dim", dim_}}}};
  }
  if (op == "embed") {
    if (!req.contains("texts") || !req["texts"].is_array()) return {{"ok", false}, {"error", "embed needs texts"}};
    llm::HashEmbedder embedder(dim_);
    return {{"ok", true}, {"vectors", embedder.embed(req["texts"].get<std::vector<std::string>>())}, {"dim", dim_}};
  }
  if (op != "ner") return {{"ok", false}, {"error", "unknown op '" + op + "'"}};
  if (!req.contains("text") || !req["text"].is_string()) return {{"ok", false}, {"error", "ner needs text"}};

  const std::u32string text = unicode::decode(req["text"].get<std::string>());
  std::vector<bool> taken(text.size(), false);
  std::vector<nlohmann::json> spans;
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (const auto& [surface, type] : gazetteer_) {
    const std::u32string needle = unicode::decode(surface);
    for (auto pos = text.find(needle); pos != std::u32string::npos; pos = text.find(needle, pos + 1)) {
      const std::size_t end = pos + needle.size();
      if (is_ascii_alnum(needle.front()) && pos > 0 && is_ascii_alnum(text[pos - 1])) continue;
      if (is_ascii_alnum(needle.back()) && end < text.size() && is_ascii_alnum(text[end])) continue;
      if (std::any_of(taken.begin() + pos, taken.begin() + end, [](bool b) { return b; })) continue;
      std::fill(taken.begin() + pos, taken.begin() + end, true);
      spans.push_back({{"start", pos}, {"end", end}, {"type", std::string(to_string(type))}, {"surface", surface},
                       {"score", 1.0}});
    }
  }
  std::sort(spans.begin(), spans.end(),
            [](const auto& a, const auto& b) { return a["start"].template get<std::size_t>() < b["start"].template get<std::size_t>(); });
  return {{"ok", true}, {"spans", spans}};
}

EntityType map_sidecar_label(const std::string& label) {
  std::string up;
  for (char c : label) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "PER" || up == "PERSON") return EntityType::Person;
  if (up == "LOC" || up == "GPE" || up == "FAC" || up == "LOCATION") return EntityType::Location;
  if (up == "ORG" || up == "ORGANIZATION") return EntityType::Org;
  if (up == "PHONE_NUMBER") return EntityType::Phone;
  if (up == "CREDIT_CARD") return EntityType::BankCard;
  return parse_entity_type(up).value_or(EntityType::Other);
}

SidecarDetection detect_sidecar(const corpus::Document& doc, SidecarClient& client) {
  SidecarDetection out;
  const auto raw = client.ner(doc.text, doc.lang);
  const unicode::Utf8Index index(doc.text);
  for (const auto& s : raw) {
    const auto start = s["start"].get<long long>();
    const auto end = s["end"].get<long long>();
    if (start < 0 || end <= start || static_cast<std::size_t>(end) > index.size()) {
      ++out.dropped;
      continue;
    }
    EntitySpan span;
    span.doc_id = doc.doc_id;
    span.start = static_cast<std::size_t>(start);
    span.end = static_cast<std::size_t>(end);
    span.surface = std::string(index.slice(doc.text, span.start, span.end));
    if (s.contains("surface") && s["surface"].get<std::string>() != span.surface) {
      ++out.dropped;
      continue;
    }
    span.entity_type = map_sidecar_label(s["type"].get<std::string>());
    span.detector = Detector::NerSidecar;
    span.confidence = std::clamp(s.value("score", 1.0), 0.0, 1.0);
    out.spans.push_back(std::move(span));
  }
  std::stable_sort(out.spans.begin(), out.spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
    return std::tuple(a.start, a.end) < std::tuple(b.start, b.end);
  });
  return out;
}

SidecarEmbedder::SidecarEmbedder(std::shared_ptr<SidecarClient> client) : client_(std::move(client)) {
  const auto status = client_->health();
  if (status.contains("dim") && status["dim"].is_number_integer()) dim_ = status["dim"].get<std::size_t>();
}

std::vector<llm::EmbeddingVector> SidecarEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  auto vectors = client_->embed(texts);
  for (const auto& v : vectors) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw llm::DimMismatch(dim_, v.size());
  }
  return vectors;
}

}  // namespace cryptosynth::pii
