#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dualac/mdp.hpp"

namespace dualac {

/**
 * JSON layout of a tabular MDP file:
 *
 *   {
 *     "n_states": 2, "n_actions": 2, "gamma": 0.5,
 *     "reward":     [[r(0,0), r(0,1)], ...],            // [s][a]
 *     "transition": [[[p(0|0,0), p(1|0,0)], ...], ...], // [s][a][s']
 *     "mu":         [1.0, 0.0]
 *   }
 */
nlohmann::json mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& j);

TabularMdp load_mdp(const std::filesystem::path& path);
void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path);

}  // namespace dualac
