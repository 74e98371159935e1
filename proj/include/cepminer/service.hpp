#pragma once

#include <memory>
#include <string>

#include "cepminer/active_learning.hpp"
#include "cepminer/pattern.hpp"
#include "cepminer/trainer.hpp"

namespace cepminer {

// HTTP front of a training run. It never touches trainer state: it reads the
// latest published snapshot and forwards ratings through the query broker.
//
//   GET  /session                -> {scale, schema, status}
//   GET  /queries/pending        -> [{id, pattern_text, predicted_rank, certainty}]
//   POST /queries/{id}/rating    -> 204 | 404 unknown | 410 answered | 422 invalid
//   GET  /patterns/top?k=10      -> ranked front entries
//   GET  /metrics                -> MetricsRecord list
class Service {
 public:
  // `broker` may be null for runs without a live expert.
  Service(EventSchema schema, int scale, QueryBroker* broker);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void publish(TrainerSnapshot snapshot);

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port; throws when the port cannot be bound.
  int start(const std::string& host, int port);
  void stop();
  // Blocks until stop() is called from elsewhere.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cepminer
