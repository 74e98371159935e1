#include "cepminer/service.hpp"

#include <httplib.h>

#include <mutex>
#include <thread>

#include "cepminer/config.hpp"
#include "cepminer/pareto.hpp"

namespace cepminer {

using nlohmann::json;

struct Service::Impl {
  EventSchema schema;
  int scale;
  QueryBroker* broker;
  httplib::Server server;
  std::thread thread;

  std::mutex mutex;
  std::shared_ptr<const TrainerSnapshot> latest = std::make_shared<TrainerSnapshot>(TrainerSnapshot{"idle", {}, {}, 0});

  std::shared_ptr<const TrainerSnapshot> current() {
    std::lock_guard lock(mutex);
    return latest;
  }

  static void send_json(httplib::Response& res, const json& doc, int status = 200) {
    res.status = status;
    res.set_content(doc.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, {{"error", message}}, status);
  }

  void routes() {
    server.Get("/session", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"scale", scale}, {"schema", schema_to_json(schema)}, {"status", current()->status}});
    });

    server.Get("/queries/pending", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      if (broker) {
        for (const auto& q : broker->pending()) {
          out.push_back({{"id", q.id},
                         {"pattern_text", q.pattern_text},
                         {"predicted_rank", q.predicted_rank},
                         {"certainty", q.certainty}});
        }
      }
      send_json(res, out);
    });

    server.Post(R"(/queries/(\d+)/rating)", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        return send_error(res, 400, "request body is not JSON");
      }
      if (!body.is_object() || !body.contains("rating")) return send_error(res, 400, "body needs a 'rating' field");
      if (!body["rating"].is_number_integer()) return send_error(res, 422, "rating must be an integer");
      const long long rating = body["rating"].get<long long>();
      if (rating < 1 || rating > scale) {
        return send_error(res, 422, "rating must be in [1, " + std::to_string(scale) + "]");
      }
      if (!broker) return send_error(res, 404, "this run has no pending queries");
      std::uint64_t id = 0;
      try {
        id = std::stoull(req.matches[1].str());
      } catch (const std::exception&) {
        return send_error(res, 404, "unknown query id");
      }
      switch (broker->submit(id, static_cast<int>(rating))) {
        case QueryBroker::SubmitStatus::Accepted:
          res.status = 204;
          return;
        case QueryBroker::SubmitStatus::NotFound:
          return send_error(res, 404, "unknown query id");
        case QueryBroker::SubmitStatus::AlreadyAnswered:
          return send_error(res, 410, "query already answered");
        case QueryBroker::SubmitStatus::OutOfRange:
          return send_error(res, 422, "rating must be in [1, " + std::to_string(scale) + "]");
      }
    });

    server.Get("/patterns/top", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t k = 10;
      if (req.has_param("k")) {
        const std::string raw = req.get_param_value("k");
        if (raw.empty() || raw.find_first_not_of("0123456789") != std::string::npos || raw.size() > 9) {
          return send_error(res, 400, "k must be a positive integer");
        }
        k = std::stoul(raw);
        if (k == 0) return send_error(res, 400, "k must be a positive integer");
      }
      const auto snap = current();
      const auto& front = snap->ranked_front;
      const std::vector<ScoredPattern> top(front.begin(), front.begin() + static_cast<std::ptrdiff_t>(std::min(k, front.size())));
      send_json(res, to_json(top));
    });

    server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& m : current()->metrics) out.push_back(to_json(m));
      send_json(res, out);
    });
  }
};

Service::Service(EventSchema schema, int scale, QueryBroker* broker) : impl_(std::make_unique<Impl>()) {
  impl_->schema = std::move(schema);
  impl_->scale = scale;
  impl_->broker = broker;
  impl_->routes();
}

Service::~Service() { stop(); }

void Service::publish(TrainerSnapshot snapshot) {
  auto next = std::make_shared<const TrainerSnapshot>(std::move(snapshot));
  std::lock_guard lock(impl_->mutex);
  impl_->latest = std::move(next);
}

int Service::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace cepminer
