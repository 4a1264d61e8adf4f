#pragma once

#include <string>
#include <vector>

#include "lumos/checkpoint.hpp"
#include "lumos/config.hpp"
#include "lumos/curriculum.hpp"
#include "lumos/dataio.hpp"
#include "lumos/losses.hpp"
#include "lumos/metrics.hpp"
#include "lumos/model.hpp"

namespace lumos {

// Training variants, ordered from no consistency signal to the full method:
// supervised ignores unlabeled data; a1 trains branch A against branch B's
// pseudo-labels one way with B held out of the consistency gradient; a2 adds
// the reverse direction; rlrw adds reliability weights; full adds fusion of
// the teacher's level prediction into the student's before weighing.
enum class Ablation { kSupervised, kA1, kA2, kRlrw, kFull };

// Accepts the short names above plus the experiment-table spellings
// teacher_student_A1, mutual_A2, +RLRW, +RLRW+MPF. Throws on anything else.
Ablation parse_ablation(const std::string& name);
const char* ablation_name(Ablation a);

struct TrainResult {
  std::string final_checkpoint;
  std::string best_checkpoint;  // empty if validation never ran
  std::string log_path;
  double final_loss = 0.0;
  double best_val_dsc = 0.0;
};

class Trainer {
 public:
  // The dataset must outlive the trainer. Throws on schema/config mismatch.
  Trainer(const ExperimentConfig& cfg, const Dataset& ds);

  // One iteration's full graph, exposed so tests can run backward on
  // individual terms and audit which parameters receive gradient.
  struct StepGraph {
    BatchIds batch;
    Model::Forward fwd;
    ad::Var l_sup;
    ad::Var l_con;  // invalid when the mode or batch has no consistency term
    ad::Var objective;
    LossBreakdown losses;
  };
  StepGraph build_step(ad::Tape& t, int iteration);
  void apply_update(ad::Tape& t, const StepGraph& g, int iteration);

  TrainResult train(const std::string& resume_path = "");

  // Validation mean DSC at the base level, the "best checkpoint" criterion.
  MetricsReport evaluate_split(const std::vector<DatasetSample>& split, int level);

  Model& model() { return model_; }
  const Schedule& schedule() const { return sched_; }
  Ablation mode() const { return mode_; }

 private:
  ExperimentConfig cfg_;
  const Dataset& ds_;
  Ablation mode_;
  Schedule sched_;
  Model model_;
  Rng data_rng_;
  std::vector<Tensor> adam_m_, adam_v_;  // parallel to model params
  double labeled_fraction_ = 0.5;

  Checkpoint snapshot(int64_t iteration, double best_val_dsc) const;
  void restore(const Checkpoint& c);
};

// Rebuilds the model from the checkpoint's config echo and runs branch-A
// inference over the test split at `level`.
MetricsReport evaluate_checkpoint(const std::string& checkpoint_path,
                                  const Dataset& ds, int level);

}  // namespace lumos
