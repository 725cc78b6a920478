#pragma once

// Small covariate model shared by the generator, fitter and harness tests.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "longsim/covgen.hpp"

namespace longsim::testing {

inline VariableSpec var(std::string name, VariableKind kind) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = kind;
  return v;
}

struct ModelParts {
  std::vector<VariableSpec> vars;
  CorrelationSpec corr;
  std::vector<CategoricalSpec> cats;
};

// subject id, sex, static age, time-varying bmi, one drug with its
// proportion, a null drug, and a three-level group drawn from baseline age.
inline ModelParts small_parts() {
  ModelParts p;
  p.vars.push_back(var("subject", VariableKind::id));
  auto male = var("male", VariableKind::binary_static);
  male.prevalence = 0.6;
  p.vars.push_back(male);
  auto age = var("age", VariableKind::normal);
  age.mu = 46;
  age.sigma_across = 10;
  age.sigma_within = 0;
  p.vars.push_back(age);
  auto bmi = var("bmi", VariableKind::time_function);
  bmi.mu = 25;
  bmi.sigma_across = 4;
  bmi.slope_sd = 0.02;
  p.vars.push_back(bmi);
  auto drug = var("drug", VariableKind::binary_time_varying);
  drug.prevalence = 0.69;
  p.vars.push_back(drug);
  auto prop = var("drug_prop", VariableKind::proportion_mean);
  prop.mu = 0.6;
  prop.sigma_across = 0.15;
  p.vars.push_back(prop);
  auto null_drug = var("other", VariableKind::binary_time_varying);
  null_drug.prevalence = 0.3;
  p.vars.push_back(null_drug);
  auto other_prop = var("other_prop", VariableKind::proportion_mean);
  other_prop.mu = 0.4;
  p.vars.push_back(other_prop);
  p.vars.push_back(var("group", VariableKind::categorical));

  p.corr.across_names = {"male", "age", "bmi", "drug", "drug_prop", "other", "other_prop"};
  p.corr.sigma_a = Eigen::MatrixXd::Identity(7, 7);
  auto set = [&](int i, int j, double r) { p.corr.sigma_a(i, j) = p.corr.sigma_a(j, i) = r; };
  set(0, 1, 0.1);
  set(1, 2, 0.3);
  set(1, 3, 0.2);
  set(3, 5, 0.15);
  p.corr.within_names = {"age", "bmi", "drug", "other"};
  p.corr.sigma_w = Eigen::MatrixXd::Identity(4, 4);
  p.corr.sigma_w(2, 3) = p.corr.sigma_w(3, 2) = 0.25;

  CategoricalSpec g;
  g.name = "group";
  g.levels = {"a", "b", "c"};
  g.covariates = {"age"};
  g.coefficients = {{-0.46 + std::log(0.3 / 0.5), 0.01}, {std::log(0.2 / 0.5), 0.0}};
  p.cats.push_back(g);
  return p;
}

inline std::shared_ptr<const CovariateModel> small_model(Diagnostics* diag = nullptr) {
  auto p = small_parts();
  return std::make_shared<const CovariateModel>(p.vars, p.corr, p.cats, diag);
}

}  // namespace longsim::testing
