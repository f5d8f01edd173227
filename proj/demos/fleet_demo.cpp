// End-to-end walkthrough: synthesize a small fleet, train the scoring model
// centrally and federated, then compare the two.

#include <cstdio>

#include "feddrive/feddrive.hpp"

using namespace feddrive;

int main() {
  datagen::PopulationSpec pop = datagen::fleet_preset(2024);
  pop.n_trips = 53 * 40;  // trimmed fleet so the demo runs in seconds

  Matrix population = datagen::gen_synthetic_population(pop);
  auto partitions = datagen::partition(population, pop);
  std::vector<fed::SimClient> vehicles;
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    vehicles.emplace_back("truck-" + std::to_string(i + 1), partitions[i]);
  }

  critic::ScoringModel central = critic::train_central(population, pop.specs);
  std::printf("central weights:");
  for (std::size_t j = 0; j < pop.specs.size(); ++j) {
    std::printf(" %s=%.4f", pop.specs[j].name.c_str(), central.weights[j]);
  }
  std::printf("\n");

  fed::RoundConfig cfg;
  cfg.rounds = 60;
  cfg.tau = 0.5;
  cfg.seed = 2024;
  cfg.key_bits = 256;
  fed::Arbiter arbiter(cfg.key_bits, cfg.seed);
  fed::FederatedResult result = fed::train_federated(vehicles, pop.specs, cfg, arbiter);

  eval::ConsistencyReport report = eval::consistency_report(
      central, result.model, population, &result.weight_history);
  std::printf("federated vs central: r2=%.6f mae=%.6f weight_gap=%.6f\n", report.r2,
              report.mae, report.weight_gap);

  auto scores = fed::federated_infer(result.model, vehicles);
  std::printf("scored %zu trips; first vehicle %s -> %.4f\n", scores.size(),
              scores.front().first.c_str(), scores.front().second);
  return report.r2 > 0.99 ? 0 : 1;
}
