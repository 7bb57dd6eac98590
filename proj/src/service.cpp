#include "gdc/service.hpp"

#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <list>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <unordered_map>

namespace gdc {
namespace {

using nlohmann::json;

enum class Status { idle, optimizing, done, failed };

const char* to_string(Status s) {
  switch (s) {
    case Status::idle: return "idle";
    case Status::optimizing: return "optimizing";
    case Status::done: return "done";
    case Status::failed: return "failed";
  }
  return "idle";
}

struct Session {
  std::mutex mutex;
  RgbImage image;
  std::optional<ScribbleSet> scribbles;
  Status status = Status::idle;
  int step = 0;
  int total = 0;
  double loss = 0;
  std::string error;
  Bytes mask_png;
  Bytes overlay_png;
};

struct Job {
  std::shared_ptr<Session> session;
  ScribbleSet scribbles;
  SegmentConfig config;
};

void send_json(httplib::Response& res, int code, const json& body) {
  res.status = code;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int code, const std::string& message) {
  send_json(res, code, {{"error", message}});
}

// Applies {sigma?, steps?, samples?, seed?}; throws FormatError on bad values.
SegmentConfig parse_optimize_body(const std::string& body, SegmentConfig config) {
  if (body.empty()) return config;
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw FormatError(std::string("optimize body: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("optimize body must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "sigma") {
      if (!value.is_number() || value.get<double>() < 0) throw FormatError("sigma must be a number >= 0");
      config.net.gdc.sigma = value.get<double>();
    } else if (key == "steps" || key == "samples") {
      if (!value.is_number_integer() || value.get<long long>() < 1 || value.get<long long>() > 100000)
        throw FormatError(key + " must be an integer in [1, 100000]");
      (key == "steps" ? config.net.steps : config.net.inference_samples) = value.get<int>();
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw FormatError("seed must be a non-negative integer");
      config.seed = value.get<std::uint64_t>();
    } else {
      throw FormatError("unknown optimize field '" + key + "'");
    }
  }
  return config;
}

}  // namespace

BindAddress parse_bind(const std::string& text) {
  BindAddress a;
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) {
    if (!text.empty()) a.host = text;
    return a;
  }
  if (colon > 0) a.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range(port);
    a.port = p;
  } catch (const std::exception&) {
    throw FormatError("bind address '" + text + "': bad port");
  }
  return a;
}

BindAddress bind_from_env() {
  const char* env = std::getenv("GDC_BIND");
  return env != nullptr && *env != '\0' ? parse_bind(env) : BindAddress{};
}

struct HttpService::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::thread listener;

  mutable std::mutex sessions_mutex;
  std::unordered_map<std::string, std::pair<std::shared_ptr<Session>, std::list<std::string>::iterator>> sessions;
  std::list<std::string> recency;  // most recent first
  std::mt19937_64 id_rng{std::random_device{}()};

  std::mutex queue_mutex;
  std::condition_variable queue_cv;
  std::deque<Job> queue;
  bool stopping = false;
  std::thread worker;

  explicit Impl(ServiceOptions o) : options(std::move(o)) {
    server.set_payload_max_length(64u << 20);
    routes();
    worker = std::thread([this] { work(); });
  }

  ~Impl() {
    {
      std::lock_guard lock(queue_mutex);
      stopping = true;
    }
    queue_cv.notify_all();
    server.stop();
    if (listener.joinable()) listener.join();
    worker.join();
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(sessions_mutex);
    const auto it = sessions.find(id);
    if (it == sessions.end()) return nullptr;
    recency.splice(recency.begin(), recency, it->second.second);
    return it->second.first;
  }

  std::string add(std::shared_ptr<Session> s) {
    std::lock_guard lock(sessions_mutex);
    std::string id;
    do {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng()));
      id = buf;
    } while (sessions.contains(id));
    recency.push_front(id);
    sessions.emplace(id, std::make_pair(std::move(s), recency.begin()));
    while (sessions.size() > options.max_sessions) {
      sessions.erase(recency.back());  // a running job keeps its own reference
      recency.pop_back();
    }
    return id;
  }

  void work() {
    for (;;) {
      Job job;
      {
        std::unique_lock lock(queue_mutex);
        queue_cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        job = std::move(queue.front());
        queue.pop_front();
      }
      Session& s = *job.session;
      RgbImage image;
      {
        std::lock_guard lock(s.mutex);
        image = s.image;
      }
      try {
        const SegmentOutput out = run_segmentation(image, job.scribbles, job.config, [&](int step, int total, double loss) {
          std::lock_guard lock(s.mutex);
          s.step = step;
          s.total = total;
          s.loss = loss;
        });
        Bytes mask = encode_mask_png(out.result.mask);
        Bytes blend = encode_png(overlay(image, out.result.mask));
        std::lock_guard lock(s.mutex);
        s.mask_png = std::move(mask);
        s.overlay_png = std::move(blend);
        s.status = Status::done;
      } catch (const std::exception& e) {
        std::lock_guard lock(s.mutex);
        s.status = Status::failed;
        s.error = e.what();
      }
    }
  }

  // Resolves the session or answers 404.
  std::shared_ptr<Session> session_or_404(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req.path_params.at("id"));
    if (!s) send_error(res, 404, "unknown session");
    return s;
  }

  void routes() {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
      const std::span<const std::uint8_t> bytes(data, req.body.size());
      auto s = std::make_shared<Session>();
      try {
        const auto [h, w] = png_size(bytes);
        if (h > options.max_side || w > options.max_side) {
          send_error(res, 413, "image exceeds " + std::to_string(options.max_side) + " pixels per side");
          return;
        }
        s->image = decode_png(bytes);
      } catch (const std::exception& e) {
        send_error(res, 400, e.what());
        return;
      }
      const Index h = s->image.height, w = s->image.width;
      send_json(res, 201, {{"id", add(std::move(s))}, {"height", h}, {"width", w}});
    });

    server.Put("/sessions/:id/scribbles", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req, res);
      if (!s) return;
      try {
        ScribbleSet set = parse_scribbles(req.body);
        std::lock_guard lock(s->mutex);
        set.validate(s->image.height, s->image.width);
        s->scribbles = std::move(set);
      } catch (const std::exception& e) {
        send_error(res, 400, e.what());
        return;
      }
      res.status = 204;
    });

    server.Post("/sessions/:id/optimize", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req, res);
      if (!s) return;
      Job job{s, {}, {}};
      try {
        job.config = parse_optimize_body(req.body, options.defaults);
        job.config.net.validate();
        job.config.net.gdc.validate();
      } catch (const std::exception& e) {
        send_error(res, 400, e.what());
        return;
      }
      {
        std::lock_guard lock(s->mutex);
        if (s->status == Status::optimizing) {
          send_error(res, 409, "an optimization is already running");
          return;
        }
        if (!s->scribbles || s->scribbles->empty()) {
          send_error(res, 400, "no scribbles to train from");
          return;
        }
        job.scribbles = *s->scribbles;
        s->status = Status::optimizing;
        s->step = 0;
        s->total = job.config.net.steps;
        s->loss = 0;
        s->error.clear();
        s->mask_png.clear();
        s->overlay_png.clear();
      }
      {
        std::lock_guard lock(queue_mutex);
        queue.push_back(std::move(job));
      }
      queue_cv.notify_one();
      send_json(res, 202, {{"status", "optimizing"}});
    });

    server.Get("/sessions/:id/status", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = session_or_404(req, res);
      if (!s) return;
      std::lock_guard lock(s->mutex);
      json body{{"status", to_string(s->status)}, {"step", s->step}, {"total", s->total}, {"loss", s->loss}};
      if (s->status == Status::failed) body["error"] = s->error;
      send_json(res, 200, body);
    });

    const auto png_route = [this](Bytes Session::*field) {
      return [this, field](const httplib::Request& req, httplib::Response& res) {
        auto s = session_or_404(req, res);
        if (!s) return;
        std::lock_guard lock(s->mutex);
        if (s->status != Status::done) {
          send_error(res, 409, std::string("no result: session is ") + to_string(s->status));
          return;
        }
        const Bytes& b = (*s).*field;
        res.status = 200;
        res.set_content(std::string(b.begin(), b.end()), "image/png");
      };
    };
    server.Get("/sessions/:id/mask.png", png_route(&Session::mask_png));
    server.Get("/sessions/:id/overlay.png", png_route(&Session::overlay_png));
  }
};

HttpService::HttpService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

HttpService::~HttpService() = default;

int HttpService::bind(const BindAddress& address) {
  const int port = address.port == 0 ? impl_->server.bind_to_any_port(address.host)
                                     : (impl_->server.bind_to_port(address.host, address.port) ? address.port : -1);
  if (port < 0) throw std::runtime_error("cannot bind " + address.host + ":" + std::to_string(address.port));
  return port;
}

void HttpService::listen() {
  if (!impl_->server.listen_after_bind()) throw std::runtime_error("http server stopped with an error");
}

int HttpService::start(const BindAddress& address) {
  const int port = bind(address);
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpService::stop() {
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

std::size_t HttpService::session_count() const {
  std::lock_guard lock(impl_->sessions_mutex);
  return impl_->sessions.size();
}

}  // namespace gdc
