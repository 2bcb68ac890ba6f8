#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mixedreg/fit.hpp"
#include "mixedreg/inference.hpp"
#include "mixedreg/model.hpp"

namespace mixedreg {

/// File formats. JSON documents carry a version field and reject unknown
/// keys; matrix indices are 1-based in files and converted at this
/// boundary. Data CSVs are wide: response columns y1..yr, then predictor
/// columns; the model's layout selects how predictors map to designs.
enum class DesignLayout { Shared, PerResponse };

struct ModelConfig {
  ModelSpec model;
  DesignLayout layout = DesignLayout::Shared;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

// {"version":1,"layout":"shared"|"per_response","families":[{"kind":...,"psi":...},...]}
ModelConfig parse_model_json(const std::string& text);
std::string model_json(const ModelConfig& cfg);

// {"version":1,"fixed":[[j,k,v],...],"zeros":[[j,k],...],
//  "ties":[[[j,k],...],...],"eigen_floor":e}; every field optional.
ConstraintSpec parse_constraints_json(const std::string& text, int r);
std::string constraints_json(const ConstraintSpec& cspec);

// {"version":1,"null":{<constraint fields>,"beta_restrictions":[[i,v],...]},
//  "alt":{<constraint fields>}}; coefficient indices 1-based.
Hypothesis parse_hypothesis_json(const std::string& text, int r);

// Wide CSV with header; shared layout: y1..yr,x1..xp; per-response layout:
// y1..yr,x1_1..x1_p,...,xr_1..xr_p.
Dataset parse_data_csv(const std::string& text, const ModelConfig& cfg);
std::string data_csv(const Dataset& data, const ModelConfig& cfg);

// Same predictor columns without the responses.
std::vector<Eigen::MatrixXd> parse_newdata_csv(const std::string& text,
                                               const ModelConfig& cfg);

std::string fit_result_json(const FitResult& res);

struct FittedParams {
  Eigen::VectorXd beta;
  Eigen::MatrixXd sigma;
};

// Reads back the parameters of a fit-result document.
FittedParams parse_fit_result_json(const std::string& text);

std::string test_result_json(const TestResult& res);
std::string ci_json(const ProfileCi& ci, int j, int k);

std::string predictions_csv(const Eigen::MatrixXd& pred);

}  // namespace mixedreg
