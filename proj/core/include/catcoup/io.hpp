#pragma once

#include <filesystem>
#include <string>

#include "catcoup/coupling.hpp"
#include "catcoup/mdp.hpp"
#include "catcoup/train.hpp"

namespace catcoup {

/// FNV-1a hex digest used to stamp outputs with their configuration.
std::string config_hash_hex(const std::string& canonical);

/// Coupling tables travel as CSV with header "x,y,prob" plus a sidecar JSON
/// ("<stem>.marginals.json") holding both marginals. An optional
/// "# config <hash>" comment line precedes the header.
void save_coupling_csv(const CouplingMatrix& coupling, const std::filesystem::path& csv_path,
                       const std::string& config_hash = "");
CouplingMatrix load_coupling_csv(const std::filesystem::path& csv_path);

/// Gadget parameter checkpoints: versioned JSON of layer shapes plus
/// row-major weights.
void save_gadget_checkpoint(const GadgetParams& params, const std::filesystem::path& path);
GadgetParams load_gadget_checkpoint(const std::filesystem::path& path);

/// Training run description (JSON): gadget kind, sizes, query source, loss,
/// seed, optimizer settings.
struct TrainRunDescription {
  ModelConfig model;
  QuerySpec query;
  TrainConfig train;
};

TrainRunDescription parse_train_run(const std::string& json_text);
TrainRunDescription load_train_run(const std::filesystem::path& path);
std::string train_run_to_json(const TrainRunDescription& run);

void save_loss_history_csv(const Vec& history, const std::filesystem::path& path,
                           const std::string& config_hash = "");

void save_trajectories_csv(const std::vector<Trajectory>& trajectories,
                           const std::filesystem::path& path,
                           const std::string& config_hash = "");
std::vector<Trajectory> load_trajectories_csv(const std::filesystem::path& path);

void save_effect_rows_csv(const std::vector<EffectRow>& rows, const std::filesystem::path& path,
                          const std::string& config_hash = "");

void save_mdp_json(const TabularMDP& mdp, const std::filesystem::path& path);
TabularMDP load_mdp_json(const std::filesystem::path& path);

}  // namespace catcoup
