#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "ttdioc/costmodel.hpp"

namespace ttdioc::cost {

Vector StageMap::operator()(const Vector& x, const Vector& u) const {
  Vector out(dim_);
  if (dim_ > 0) {
    (*this)(std::span<const double>(x.data(), x.size()), std::span<const double>(u.data(), u.size()),
            std::span<double>(out.data(), dim_));
  }
  return out;
}

FeatureMap squared_features(int state_dim, int input_dim) {
  return StageMap::from_generic(state_dim + input_dim, "squares", [state_dim, input_dim](auto x, auto u, auto out) {
    for (int i = 0; i < state_dim; ++i) out[i] = square(x[i]);
    for (int j = 0; j < input_dim; ++j) out[state_dim + j] = square(u[j]);
  });
}

Vector omega(std::span<const double> frequencies, double t) {
  Vector out(2 * frequencies.size() + 1);
  omega<double>(frequencies, t, std::span<double>(out.data(), out.size()));
  return out;
}

TrigTimeModel::TrigTimeModel(std::vector<double> frequencies, Matrix coefficients)
    : frequencies_(std::move(frequencies)), coefficients_(std::move(coefficients)) {
  for (std::size_t e = 1; e < frequencies_.size(); ++e) {
    if (!(frequencies_[e] > frequencies_[e - 1])) {
      throw std::invalid_argument("TrigTimeModel: frequencies must be strictly increasing");
    }
  }
  if (coefficients_.rows() != rows()) {
    throw std::invalid_argument("TrigTimeModel: coefficient matrix must have 2E+1 rows");
  }
}

TrigTimeModel TrigTimeModel::constant(const Vector& theta) {
  return TrigTimeModel({}, Matrix(theta.transpose()));
}

Vector TrigTimeModel::theta(double t) const {
  return coefficients_.transpose() * omega(frequencies_, t);
}

TrigTimeModel TrigTimeModel::scaled(double factor) const {
  return TrigTimeModel(frequencies_, coefficients_ * factor);
}

std::string_view to_string(Benchmark b) noexcept {
  switch (b) {
    case Benchmark::sys1:
      return "sys1";
    case Benchmark::sys2:
      return "sys2";
    case Benchmark::spring1:
      return "spring1";
  }
  return "unknown";
}

Benchmark benchmark_from_string(std::string_view name) {
  if (name == "sys1") return Benchmark::sys1;
  if (name == "sys2") return Benchmark::sys2;
  if (name == "spring1") return Benchmark::spring1;
  throw std::invalid_argument("unknown system: " + std::string(name));
}

double TruthProfile::value(double t) const {
  switch (kind) {
    case ProfileKind::trig:
      return 4.0 + 1.5 * std::cos(2.0 * t) + 1.5 * std::cos(3.0 * t);
    case ProfileKind::poly:
      return 1.5 + 0.02 * t * t - 0.01 * t;
    case ProfileKind::exp:
      return 4.0 + std::exp(0.2 * t);
    case ProfileKind::constant:
      return constant;
    case ProfileKind::harmonic: {
      double v = 4.0;
      for (int j = 1; j <= order; ++j) v += (1.5 / j) * std::cos(j * t);
      return v;
    }
  }
  return 0.0;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string TruthProfile::tag() const {
  switch (kind) {
    case ProfileKind::trig:
      return "thetam1";
    case ProfileKind::poly:
      return "thetam2";
    case ProfileKind::exp:
      return "thetam3";
    case ProfileKind::constant:
      return "const:" + shortest(constant);
    case ProfileKind::harmonic:
      return "harmonic:" + std::to_string(order);
  }
  return "unknown";
}

TruthProfile TruthProfile::parse(std::string_view tag) {
  TruthProfile p;
  if (tag == "thetam1") {
    p.kind = ProfileKind::trig;
  } else if (tag == "thetam2") {
    p.kind = ProfileKind::poly;
  } else if (tag == "thetam3") {
    p.kind = ProfileKind::exp;
  } else if (tag.starts_with("const:")) {
    p.kind = ProfileKind::constant;
    const std::string_view num = tag.substr(6);
    auto res = std::from_chars(num.data(), num.data() + num.size(), p.constant);
    if (res.ec != std::errc() || res.ptr != num.data() + num.size()) {
      throw std::invalid_argument("bad constant profile: " + std::string(tag));
    }
  } else if (tag.starts_with("harmonic:")) {
    p.kind = ProfileKind::harmonic;
    const std::string_view num = tag.substr(9);
    auto res = std::from_chars(num.data(), num.data() + num.size(), p.order);
    if (res.ec != std::errc() || res.ptr != num.data() + num.size() || p.order < 0) {
      throw std::invalid_argument("bad harmonic profile: " + std::string(tag));
    }
  } else {
    throw std::invalid_argument("unknown truth profile: " + std::string(tag));
  }
  return p;
}

int time_varying_slot(Benchmark b) noexcept {
  switch (b) {
    case Benchmark::sys1:
      return 8;
    case Benchmark::sys2:
      return 5;
    case Benchmark::spring1:
      return 2;
  }
  return 0;
}

Vector truth_theta(Benchmark b, const TruthProfile& profile, double t) {
  Vector theta;
  switch (b) {
    case Benchmark::sys1:
      theta.resize(9);
      theta << 7.0, 5.0, 6.0, 8.0, 6.5, 5.5, 2.0, 4.0, 0.0;
      break;
    case Benchmark::sys2:
      theta.resize(6);
      theta << 7.0, 5.0, 10.0, 5.0, 4.0, 0.0;
      break;
    case Benchmark::spring1:
      theta.resize(3);
      theta << 7.0, 5.0, 0.0;
      break;
  }
  theta[time_varying_slot(b)] = profile.value(t);
  return theta;
}

ThetaSchedule schedule_of(const TrigTimeModel& model) {
  return [model](double t) { return model.theta(t); };
}

ThetaSchedule schedule_of(Benchmark b, const TruthProfile& profile) {
  return [b, profile](double t) { return truth_theta(b, profile, t); };
}

double stage_cost(const TrigTimeModel& model, const FeatureMap& features, double t, const Vector& x,
                  const Vector& u) {
  return model.theta(t).dot(features(x, u));
}

}  // namespace ttdioc::cost
