#include "dualac/mdp_io.hpp"

#include <fstream>
#include <vector>

#include "dualac/errors.hpp"

namespace dualac {

nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  const int n_s = mdp.n_states();
  const int n_a = mdp.n_actions();
  nlohmann::json reward = nlohmann::json::array();
  nlohmann::json transition = nlohmann::json::array();
  for (int s = 0; s < n_s; ++s) {
    nlohmann::json r_row = nlohmann::json::array();
    nlohmann::json p_s = nlohmann::json::array();
    for (int a = 0; a < n_a; ++a) {
      r_row.push_back(mdp.reward(s, a));
      std::vector<double> row(static_cast<std::size_t>(n_s));
      for (int t = 0; t < n_s; ++t) row[static_cast<std::size_t>(t)] = mdp.transition(s, a, t);
      p_s.push_back(row);
    }
    reward.push_back(std::move(r_row));
    transition.push_back(std::move(p_s));
  }
  std::vector<double> mu(mdp.mu().data(), mdp.mu().data() + mdp.mu().size());
  return {{"n_states", n_s}, {"n_actions", n_a}, {"gamma", mdp.gamma()},
          {"reward", reward}, {"transition", transition}, {"mu", mu}};
}

TabularMdp mdp_from_json(const nlohmann::json& j) {
  try {
    const int n_s = j.at("n_states").get<int>();
    const int n_a = j.at("n_actions").get<int>();
    if (n_s < 1 || n_a < 1) throw InvalidArgument("n_states and n_actions must be positive");
    const auto& reward = j.at("reward");
    const auto& transition = j.at("transition");
    const auto& mu_json = j.at("mu");
    if (reward.size() != static_cast<std::size_t>(n_s) || transition.size() != static_cast<std::size_t>(n_s) ||
        mu_json.size() != static_cast<std::size_t>(n_s)) {
      throw InvalidArgument("reward, transition and mu must have n_states rows");
    }
    Matrix r(n_s, n_a);
    std::vector<Matrix> p(static_cast<std::size_t>(n_a), Matrix(n_s, n_s));
    for (int s = 0; s < n_s; ++s) {
      const auto& r_row = reward.at(static_cast<std::size_t>(s));
      const auto& p_s = transition.at(static_cast<std::size_t>(s));
      if (r_row.size() != static_cast<std::size_t>(n_a) || p_s.size() != static_cast<std::size_t>(n_a)) {
        throw InvalidArgument("reward/transition rows must have n_actions entries");
      }
      for (int a = 0; a < n_a; ++a) {
        r(s, a) = r_row.at(static_cast<std::size_t>(a)).get<double>();
        const auto& dist = p_s.at(static_cast<std::size_t>(a));
        if (dist.size() != static_cast<std::size_t>(n_s)) {
          throw InvalidArgument("transition distributions must have n_states entries");
        }
        for (int t = 0; t < n_s; ++t) p[static_cast<std::size_t>(a)](s, t) = dist.at(static_cast<std::size_t>(t)).get<double>();
      }
    }
    Vector mu(n_s);
    for (int s = 0; s < n_s; ++s) mu(s) = mu_json.at(static_cast<std::size_t>(s)).get<double>();
    return TabularMdp(std::move(p), std::move(r), j.at("gamma").get<double>(), std::move(mu));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed MDP document: ") + e.what());
  }
}

TabularMdp load_mdp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open MDP file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("cannot parse MDP file " + path.string() + ": " + e.what());
  }
  return mdp_from_json(j);
}

void save_mdp(const TabularMdp& mdp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write MDP file " + path.string());
  out << mdp_to_json(mdp).dump(2) << '\n';
}

}  // namespace dualac
