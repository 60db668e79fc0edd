#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mhcohort/asymptotics.hpp"
#include "mhcohort/cli.hpp"
#include "mhcohort/errors.hpp"
#include "mhcohort/estimator.hpp"
#include "mhcohort/montecarlo.hpp"

namespace py = pybind11;
using namespace mhc;

namespace {

DesignSpec make_design(const std::string& kind, int m, const std::vector<int>& m_strata, bool clamp) {
  switch (parse_design(kind)) {
    case DesignKind::Full: return DesignSpec::full();
    case DesignKind::SRS: return DesignSpec::srs(m);
    case DesignKind::Matching: return DesignSpec::matching(m_strata, clamp);
    case DesignKind::CounterMatching: return DesignSpec::counter_matching(m_strata, clamp);
  }
  return DesignSpec::full();
}

std::vector<SampledFailure> sampled_from_csv(const std::string& text, const LevelSet& levels,
                                             const DesignSpec& design, std::uint64_t seed) {
  if (text.find("member_id") != std::string::npos) return parse_sampled_csv(text);
  return sample_cohort(build_cohort(parse_event_csv(text), levels), design, seed);
}

}  // namespace

PYBIND11_MODULE(_mhcohort, mod) {
  mod.doc() = "Mantel-Haenszel rate ratio estimation under cohort sampling designs";

  py::register_exception<UsageError>(mod, "UsageError", PyExc_ValueError);
  py::register_exception<IoError>(mod, "IoError", PyExc_OSError);
  py::register_exception<SchemaError>(mod, "SchemaError", PyExc_ValueError);
  py::register_exception<NumericalError>(mod, "NumericalError", PyExc_ArithmeticError);

  py::class_<EstimateResult>(mod, "EstimateResult")
      .def_readonly("phi_hat", &EstimateResult::phi_hat)
      .def_readonly("theta_hat", &EstimateResult::theta_hat)
      .def_readonly("sigma2", &EstimateResult::sigma2)
      .def_readonly("sigma2_theta", &EstimateResult::sigma2_theta)
      .def_readonly("ci_low", &EstimateResult::ci_low)
      .def_readonly("ci_high", &EstimateResult::ci_high)
      .def_readonly("n", &EstimateResult::n)
      .def_readonly("failures", &EstimateResult::failures)
      .def_readonly("c", &EstimateResult::c)
      .def_readonly("flags", &EstimateResult::flags)
      .def_readonly("degenerate", &EstimateResult::degenerate)
      .def("to_json", &estimate_to_json);

  mod.def(
      "estimate_csv",
      [](const std::string& text, std::vector<double> alphas, const std::string& design, int m,
         std::vector<int> m_strata, std::uint64_t seed, const std::string& variance, double cohort_size) {
        LevelSet levels(std::move(alphas), {});
        EstimateOptions opt;
        opt.variance = parse_method(variance);
        opt.n_cohort = cohort_size;
        return estimate(sampled_from_csv(text, levels, make_design(design, m, m_strata, false), seed), levels, opt);
      },
      py::arg("text"), py::arg("alphas") = std::vector<double>{0.0, 1.0}, py::arg("design") = "full",
      py::arg("m") = 2, py::arg("m_strata") = std::vector<int>{}, py::arg("seed") = 0,
      py::arg("variance") = "optional", py::arg("cohort_size") = 0.0,
      "Estimate the rate ratio from event-record or sampled-set CSV text.");

  mod.def(
      "sigma2",
      [](const std::string& design, int m, std::vector<double> freq, double phi0) {
        PopulationModel pop = PopulationModel::constant(LevelSet::classical(), std::move(freq), 1.0, 1.0, 1.0);
        return sigma2_mh(make_design(design, m, {}, false), pop, phi0);
      },
      py::arg("design"), py::arg("m") = 2, py::arg("freq") = std::vector<double>{0.8, 0.2}, py::arg("phi0") = 1.0,
      "Asymptotic variance of sqrt(n)(phi_hat - phi0) in a time-constant two-level population.");

  mod.def(
      "are_curve",
      [](const std::string& design, int m, std::vector<int> m_strata, double f1, double delta, double gamma,
         const std::vector<double>& log_phi) {
        DesignSpec d = make_design(design, m, m_strata, false);
        PopulationModel pop = d.kind == DesignKind::CounterMatching || d.kind == DesignKind::Matching
                                  ? cm_population({f1, delta, gamma}, 1.0, 1.0, 1.0)
                                  : PopulationModel::constant(LevelSet::classical(), {1 - f1, f1}, 1.0, 1.0, 1.0);
        std::vector<std::pair<double, double>> out;
        for (const auto& r : mhc::are_curve(d, pop, log_phi)) out.emplace_back(r.log_phi, r.are);
        return out;
      },
      py::arg("design"), py::arg("m") = 2, py::arg("m_strata") = std::vector<int>{1, 1}, py::arg("f1") = 0.2,
      py::arg("delta") = 1.0, py::arg("gamma") = 1.0, py::arg("log_phi") = std::vector<double>{0.0},
      "(log phi, ARE) pairs against the maximum partial likelihood estimator.");

  mod.def(
      "hypergeom_moment",
      [](const std::vector<long>& n, long m, const std::vector<int>& v) {
        return static_cast<double>(mhc::hypergeom_moment(n, m, v));
      },
      py::arg("n"), py::arg("m"), py::arg("v"));

  mod.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> all{"mhcohort"};
        all.insert(all.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : all) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = mhc::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command-line invocation in process; returns (exit code, stdout, stderr).");
}
