#include "ftobs/presets.hpp"

namespace ftobs::presets {

simnet::Scenario reference() {
  simnet::Scenario s;
  s.name = "reference";
  s.a = Matrix(6, 6);
  s.a << -1, 0, 0, 0, 0, 0,
         -1, 1, 1, 0, 0, 0,
         1, -2, -1, -1, 1, 1,
         0, 0, 0, -1, 0, 0,
         -8, 1, -1, -1, -2, 0,
         4, -0.5, 0.5, 0, 0, -4;
  s.c = Matrix(6, 6);
  s.c << 1, 0, 0, 2, 0, 0,
         2, 0, 0, 1, 0, 0,
         2, 0, 1, 0, 0, 1,
         0, 0, 0, 2, 0, 0,
         1, 0, 2, 0, 0, 0,
         2, 0, 4, 0, 0, 0;
  s.partition = {2, 1, 1, 2};
  s.adjacency = topology::IntMatrix(4, 4);
  s.adjacency << 0, 0, 1, 1,
                 1, 0, 1, 0,
                 0, 1, 0, 0,
                 1, 0, 0, 0;

  s.delays.model = simnet::DelayModel::Uniform;
  s.delays.lo = 0.0;
  s.delays.hi = 0.27;
  s.delays.tau_bar = 0.27;

  s.noise.measurement = 0.2;
  s.noise.disturbance.waveform = simnet::Waveform::Sinusoid;
  s.noise.disturbance.amplitude = 0.1;
  s.noise.disturbance.angular_frequency = 50.0;

  s.run.dt = 1e-4;
  s.run.t_end = 10.0;
  s.run.t_delta = 1.0;
  s.run.x0 = Vector::Ones(6);
  s.run.seed = 42;
  return s;
}

std::vector<std::string> names() { return {"reference"}; }

std::optional<simnet::Scenario> by_name(std::string_view name) {
  if (name == "reference") return reference();
  return std::nullopt;
}

}  // namespace ftobs::presets
