#include "mrsr/gradcheck.hpp"

#include <numeric>

namespace mrsr {

HyperParams GradCheckSpec::default_hyper() {
  HyperParams h;
  h.max_len = 6;
  h.dim = 8;
  h.layers = 2;
  h.heads = 2;
  h.dropout = 0.0;
  h.alpha = 0.5;
  h.beta = 0.5;
  h.lambda = 0.01;
  h.batch_size = 4;
  h.seed = 1;
  return h;
}

GradCheckSpec GradCheckSpec::from_kv(const KeyValues& values) {
  GradCheckSpec spec;
  KeyValues hyper_values;
  for (const auto& [key, value] : values) {
    auto as_int = [&] {
      try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used == value.size()) return v;
      } catch (const std::exception&) {
      }
      throw DataError("gradcheck: " + key + "='" + value + "' is not an integer");
    };
    auto as_double = [&] {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used == value.size()) return v;
      } catch (const std::exception&) {
      }
      throw DataError("gradcheck: " + key + "='" + value + "' is not a number");
    };
    if (key == "items") spec.items = as_int();
    else if (key == "relations") spec.relations = as_int();
    else if (key == "users") spec.users = as_int();
    else if (key == "coords") spec.coordinates = static_cast<std::size_t>(as_int());
    else if (key == "step") spec.step = as_double();
    else if (key == "param_scale") spec.param_scale = as_double();
    else hyper_values[key] = value;
  }
  spec.hyper = HyperParams::from_kv(hyper_values, default_hyper());
  return spec;
}

KeyValues GradCheckSpec::to_kv() const {
  KeyValues kv = hyper.to_kv();
  kv["items"] = std::to_string(items);
  kv["relations"] = std::to_string(relations);
  kv["users"] = std::to_string(users);
  kv["coords"] = std::to_string(coordinates);
  kv["step"] = format_double(step);
  kv["param_scale"] = format_double(param_scale);
  return kv;
}

GradCheckProblem make_gradcheck_problem(const GradCheckSpec& spec) {
  spec.hyper.validate();
  require(spec.hyper.dropout == 0.0, "gradcheck: dropout must be 0 for a deterministic loss");
  SynthSpec synth;
  synth.users = spec.users;
  synth.items = spec.items;
  synth.relations = spec.relations;
  synth.min_length = 5;
  synth.max_length = spec.hyper.max_len + 3;
  synth.out_degree = 2;
  synth.p_relation = spec.relations > 0 ? 0.5 : 0.0;
  synth.max_len = spec.hyper.max_len;

  GradCheckProblem problem;
  problem.data = generate_synthetic(synth, spec.hyper.seed);
  Rng rng(spec.hyper.seed);
  problem.params = init_params(spec.hyper, problem.data.corpus.num_items(), spec.relations, rng);
  std::normal_distribution<double> normal(0.0, spec.param_scale);
  problem.params.for_each([&](const std::string&, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  });
  problem.params.pin_padding_row();

  std::vector<UserIndex> users(static_cast<std::size_t>(problem.data.corpus.num_users()));
  std::iota(users.begin(), users.end(), UserIndex{1});
  problem.batch = make_batch(problem.data.corpus, problem.data.relations, users, spec.hyper, rng);
  return problem;
}

GradCheckReport run_gradcheck(const GradCheckSpec& spec) {
  const GradCheckProblem problem = make_gradcheck_problem(spec);
  GradCheckReport report;
  report.parameters = problem.params.size();
  report.result = check_loss_gradients(problem.params, spec.hyper, problem.batch, spec.coordinates,
                                       spec.hyper.seed, spec.step);
  report.worst_parameter = problem.params.coordinate_name(static_cast<Eigen::Index>(report.result.worst_coordinate));
  Rng unused(0);
  report.loss = loss_and_gradients(problem.params, spec.hyper, problem.batch, false, unused).loss.total;
  return report;
}

}  // namespace mrsr
