#include "lumos/trainer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lumos/kern/backend.hpp"

namespace lumos {
namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("trainer: " + what);
}

// [1, groups, h*w]; background pixels are zero in every class plane
Tensor onehot_of(const LabelMap& lab, int groups) {
  const int64_t n = (int64_t)lab.h * lab.w;
  Tensor oh({1, (int64_t)groups, n});
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t v = lab.data[(size_t)i];
    if (v != kBackground) oh[(int64_t)v * n + i] = 1.0f;
  }
  return oh;
}

// copies sample `b` of a [B,C,H,W] activation into a [C, H*W] tensor
Tensor sample_feat(const Tensor& fp, int64_t b) {
  const int64_t C = fp.dim(1), n = fp.dim(2) * fp.dim(3);
  Tensor out({C, n});
  std::memcpy(out.data(), fp.data() + b * C * n, (size_t)(C * n) * sizeof(float));
  return out;
}

std::string join_ids(const std::vector<DatasetSample>& pool, const std::vector<int>& idx) {
  std::string s;
  for (size_t i = 0; i < idx.size(); ++i) {
    if (i) s += ",";
    s += pool[(size_t)idx[i]].id;
  }
  return s;
}

}  // namespace

Ablation parse_ablation(const std::string& name) {
  if (name == "supervised") return Ablation::kSupervised;
  if (name == "a1" || name == "teacher_student_A1") return Ablation::kA1;
  if (name == "a2" || name == "mutual_A2") return Ablation::kA2;
  if (name == "rlrw" || name == "+RLRW") return Ablation::kRlrw;
  if (name == "full" || name == "+RLRW+MPF") return Ablation::kFull;
  fail("unknown ablation mode '" + name +
       "' (expected supervised, a1|teacher_student_A1, a2|mutual_A2, rlrw|+RLRW, full|+RLRW+MPF)");
}

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kSupervised: return "supervised";
    case Ablation::kA1: return "a1";
    case Ablation::kA2: return "a2";
    case Ablation::kRlrw: return "rlrw";
    case Ablation::kFull: return "full";
  }
  return "?";
}

Trainer::Trainer(const ExperimentConfig& cfg, const Dataset& ds)
    : cfg_(cfg),
      ds_(ds),
      mode_(parse_ablation(cfg.ablation)),
      model_(cfg.model, Rng::derive(cfg.seed, 0)),
      data_rng_(Rng::derive(cfg.seed, 1)) {
  if (cfg.model.base_classes != ds.schema.base_classes) {
    fail("model expects " + std::to_string(cfg.model.base_classes) +
         " base classes but the dataset schema has " + std::to_string(ds.schema.base_classes));
  }
  const int stride = 1 << cfg.model.stages;
  if (ds.size % stride != 0) {
    fail("image size " + std::to_string(ds.size) + " is not divisible by the encoder stride " +
         std::to_string(stride));
  }
  labeled_fraction_ = cfg.labeled_fraction;

  sched_ = default_schedule(ds.schema, cfg.total_iterations);
  if (!cfg.boundaries.empty()) sched_.boundaries = cfg.boundaries;
  sched_.base_lr = cfg.base_lr;
  sched_.power = cfg.power;
  validate_schedule(sched_);

  adam_m_.reserve(model_.params().size());
  adam_v_.reserve(model_.params().size());
  for (const Param& p : model_.params()) {
    adam_m_.emplace_back(p.value.shape());
    adam_v_.emplace_back(p.value.shape());
  }
}

Trainer::StepGraph Trainer::build_step(ad::Tape& t, int iteration) {
  StepGraph g;
  g.batch = draw_batch(ds_, cfg_.batch_size, labeled_fraction_, data_rng_);
  const int n_lab = (int)g.batch.labeled.size();
  const int n_unl = (int)g.batch.unlabeled.size();
  const int nb = n_lab + n_unl;
  const int64_t hw = (int64_t)ds_.size * ds_.size;

  Tensor images({(int64_t)nb, 1, (int64_t)ds_.size, (int64_t)ds_.size});
  std::vector<LabelMap> labels((size_t)n_lab);
  for (int i = 0; i < n_lab; ++i) {
    const DatasetSample& s = ds_.labeled[(size_t)g.batch.labeled[(size_t)i]];
    std::vector<float> img = s.image;
    labels[(size_t)i] = s.label;
    const AugmentDraws d = draw_augment(data_rng_);
    apply_augment(img, &labels[(size_t)i], ds_.size, ds_.size, d, data_rng_);
    std::memcpy(images.data() + (int64_t)i * hw, img.data(), (size_t)hw * sizeof(float));
  }
  for (int j = 0; j < n_unl; ++j) {
    const DatasetSample& s = ds_.unlabeled[(size_t)g.batch.unlabeled[(size_t)j]];
    std::vector<float> img = s.image;
    const AugmentDraws d = draw_augment(data_rng_);
    apply_augment(img, nullptr, ds_.size, ds_.size, d, data_rng_);
    std::memcpy(images.data() + (int64_t)(n_lab + j) * hw, img.data(), (size_t)hw * sizeof(float));
  }

  // The supervised baseline consumes the identical batch and augmentation
  // stream but forwards only the labeled prefix, so the labeled signal is
  // bit-identical across ablation modes at a given seed.
  if (mode_ == Ablation::kSupervised && n_unl > 0) {
    Tensor lab_only({(int64_t)n_lab, 1, (int64_t)ds_.size, (int64_t)ds_.size});
    std::memcpy(lab_only.data(), images.data(), (size_t)(n_lab * hw) * sizeof(float));
    images = lab_only;
  }
  g.fwd = model_.forward(t, images, ForwardOptions{});

  // Supervised term: each labeled sample scored at its own annotation level,
  // with base probabilities composed up to that level first; both branches
  // contribute equally.
  ad::Var sup_sum;
  for (int i = 0; i < n_lab; ++i) {
    const int lv = labels[(size_t)i].level;
    const auto& groups = ds_.schema.levels[(size_t)lv].groups;
    const Tensor oh = onehot_of(labels[(size_t)i], ds_.schema.group_count(lv));
    for (const BranchOut* br : {&g.fwd.a, &g.fwd.b}) {
      ad::Var p = ad::noisy_or(ad::slice_dim0(br->probs, i, i + 1), groups);
      ad::Var li = dice_bce_loss(p, oh);
      sup_sum = sup_sum.ok() ? ad::add(sup_sum, li) : li;
    }
  }
  g.l_sup = ad::scale(sup_sum, 1.0f / (float)(2 * n_lab));

  if (mode_ != Ablation::kSupervised && n_unl > 0) {
    // A1/A2 are network-only baselines: their pseudo-labels stay at the base
    // level. The reliability-weighted modes follow the coarse-to-fine
    // curriculum for the consistency target's granularity.
    const bool curricular = mode_ == Ablation::kRlrw || mode_ == Ablation::kFull;
    const int lv = curricular ? target_level(iteration, sched_) : 0;
    const auto& groups = ds_.schema.levels[(size_t)lv].groups;
    ad::Var pa = ad::noisy_or(ad::slice_dim0(g.fwd.a.probs, n_lab, nb), groups);
    ad::Var pb = ad::noisy_or(ad::slice_dim0(g.fwd.b.probs, n_lab, nb), groups);

    if (mode_ == Ablation::kA1) {
      // one direction; branch B acts as the teacher and takes no gradient
      g.l_con = bce_mean_loss(pa, pseudo_label(t.value(pb)));
    } else if (mode_ == Ablation::kA2) {
      g.l_con = mutual_learning_loss(pa, pb).total;
    } else {
      // Reliability-weighted consistency, both directions. All teacher-side
      // fields (pseudo-labels, prototypes, similarity, entropies) are plain
      // tensors, so gradient reaches only the student's composed prediction.
      auto direction = [&](ad::Var student, ad::Var teacher, const Tensor& teacher_fp) {
        const Tensor& p_t = t.value(teacher);
        const Tensor& p_s = t.value(student);
        const Tensor t_f = pseudo_label(p_t);
        const Tensor h_s = uncertainty(p_s);
        const Tensor h_t = uncertainty(p_t);
        const int64_t u = p_t.dim(0), gcount = p_t.dim(1);
        Tensor s_sim({u, gcount, hw});
        for (int64_t k = 0; k < u; ++k) {
          Tensor feat = sample_feat(teacher_fp, n_lab + k);
          Tensor probs_k({gcount, hw});
          std::memcpy(probs_k.data(), p_t.data() + k * gcount * hw,
                      (size_t)(gcount * hw) * sizeof(float));
          const Tensor sim = similarity_map(feat, prototypes(feat, probs_k));
          std::memcpy(s_sim.data() + k * gcount * hw, sim.data(),
                      (size_t)(gcount * hw) * sizeof(float));
        }
        const ReliabilityFields f = reliability_weights(s_sim, p_t, h_s, h_t);
        ad::Var p_f = student;
        if (mode_ == Ablation::kFull) {
          // fuse the teacher's own level prediction into the student's; the
          // teacher half enters as a constant
          Tensor half(p_t.shape());
          for (int64_t i = 0; i < half.numel(); ++i) half[i] = 0.5f * p_t[i];
          p_f = ad::add_constant(ad::scale(student, 0.5f), half);
        }
        return consistency_loss(p_f, t_f, f.w_region, f.m);
      };
      g.l_con = ad::add(direction(pa, pb, t.value(g.fwd.b.fp)),
                        direction(pb, pa, t.value(g.fwd.a.fp)));
    }
  }

  g.objective = total_loss(g.l_sup, g.l_con, &g.losses);
  return g;
}

void Trainer::apply_update(ad::Tape& t, const StepGraph& g, int iteration) {
  t.backward(g.objective);
  const float lr = (float)poly_lr(iteration, sched_);
  const int step = iteration + 1;
  const float inv_bc1 = (float)(1.0 / (1.0 - std::pow(0.9, step)));
  const float inv_bc2 = (float)(1.0 / (1.0 - std::pow(0.999, step)));
  auto& params = model_.params();
  for (size_t i = 0; i < params.size(); ++i) {
    const ad::Var pv = g.fwd.pvars[i];
    if (!pv.ok() || !t.has_grad(pv)) continue;
    kern::active().adam_step(params[i].value.numel(), params[i].value.data(),
                             t.grad(pv).data(), adam_m_[i].data(), adam_v_[i].data(), lr,
                             0.9f, 0.999f, 1e-8f, inv_bc1, inv_bc2);
  }
}

Checkpoint Trainer::snapshot(int64_t iteration, double best_val_dsc) const {
  Checkpoint c;
  c.config = config_to_json(cfg_);
  c.iteration = iteration;
  c.rng_state = data_rng_.save_state();
  c.best_val_dsc = best_val_dsc;
  const auto& params = model_.params();
  for (size_t i = 0; i < params.size(); ++i) {
    c.arrays.push_back({params[i].name, params[i].value});
    c.arrays.push_back({"adam.m." + params[i].name, adam_m_[i]});
    c.arrays.push_back({"adam.v." + params[i].name, adam_v_[i]});
  }
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const Param& a : c.arrays)
      if (a.name == name) return a.value;
    fail("checkpoint is missing array '" + name + "'");
  };
  auto& params = model_.params();
  for (size_t i = 0; i < params.size(); ++i) {
    auto copy_into = [&](Tensor& dst, const Tensor& src, const std::string& name) {
      if (!dst.same_shape(src)) fail("checkpoint array '" + name + "' has the wrong shape");
      std::memcpy(dst.data(), src.data(), (size_t)dst.numel() * sizeof(float));
    };
    copy_into(params[i].value, find(params[i].name), params[i].name);
    copy_into(adam_m_[i], find("adam.m." + params[i].name), "adam.m." + params[i].name);
    copy_into(adam_v_[i], find("adam.v." + params[i].name), "adam.v." + params[i].name);
  }
  data_rng_.load_state(c.rng_state);
}

MetricsReport Trainer::evaluate_split(const std::vector<DatasetSample>& split, int level) {
  std::vector<LabelMap> preds, gts;
  preds.reserve(split.size());
  gts.reserve(split.size());
  Tensor img({1, 1, (int64_t)ds_.size, (int64_t)ds_.size});
  for (const DatasetSample& s : split) {
    std::memcpy(img.data(), s.image.data(), s.image.size() * sizeof(float));
    preds.push_back(model_.predict(img, ds_.schema, level));
    gts.push_back(s.label);
  }
  return evaluate(preds, gts, ds_.schema, level);
}

TrainResult Trainer::train(const std::string& resume_path) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg_.out_dir);
  TrainResult result;
  result.log_path = cfg_.out_dir + "/train_log.jsonl";
  result.final_checkpoint = cfg_.out_dir + "/last.ckpt";

  int start = 0;
  double best = 0.0;
  bool have_best = false;
  if (!resume_path.empty()) {
    Checkpoint c = load_checkpoint(resume_path);
    // the output directory is artifact plumbing, not training state; a
    // resume into a fresh directory is fine, anything else must match
    nlohmann::json expected = config_to_json(cfg_);
    expected["train"].erase("out_dir");
    c.config["train"].erase("out_dir");
    require_config_match(c, expected);
    restore(c);
    start = (int)c.iteration;
    best = c.best_val_dsc;
    have_best = best > 0.0;
    if (start >= cfg_.total_iterations) fail("checkpoint is already at the final iteration");
  }

  std::ofstream log(result.log_path, start == 0 ? std::ios::trunc : std::ios::app);
  if (!log) fail("cannot open log file '" + result.log_path + "'");
  if (start == 0) {
    nlohmann::json header;
    header["ablation"] = ablation_name(mode_);
    header["config"] = config_to_json(cfg_);
    log << header.dump() << "\n";
  }

  const std::string best_path = cfg_.out_dir + "/best.ckpt";
  for (int it = start; it < cfg_.total_iterations; ++it) {
    ad::Tape t;
    StepGraph g = build_step(t, it);
    if (!std::isfinite(g.losses.l_total)) {
      fail("non-finite loss at iteration " + std::to_string(it) + "; batch labeled=[" +
           join_ids(ds_.labeled, g.batch.labeled) + "] unlabeled=[" +
           join_ids(ds_.unlabeled, g.batch.unlabeled) + "]");
    }
    apply_update(t, g, it);
    result.final_loss = g.losses.l_total;

    nlohmann::json line;
    line["iter"] = it;
    line["lr"] = poly_lr(it, sched_);
    line["level"] = ds_.schema.level_name(target_level(it, sched_));
    line["l_sup"] = g.losses.l_sup;
    if (g.l_con.ok()) line["l_con"] = g.losses.l_con;
    line["l_total"] = g.losses.l_total;
    log << line.dump() << "\n";

    const int done = it + 1;
    const bool last = done == cfg_.total_iterations;
    if (!ds_.val.empty() && cfg_.eval_interval > 0 &&
        (done % cfg_.eval_interval == 0 || last)) {
      const MetricsReport r = evaluate_split(ds_.val, 0);
      nlohmann::json ev;
      ev["iter"] = done;
      ev["mean_dsc"] = r.mean_dsc;
      ev["mean_hd95"] = r.mean_hd95;
      log << ev.dump() << "\n";
      if (!have_best || r.mean_dsc > best) {
        best = r.mean_dsc;
        have_best = true;
        save_checkpoint(snapshot(done, best), best_path);
        result.best_checkpoint = best_path;
      }
    }
    if (cfg_.checkpoint_interval > 0 && done % cfg_.checkpoint_interval == 0 && !last) {
      std::ostringstream name;
      name << cfg_.out_dir << "/ckpt_" << done << ".ckpt";
      save_checkpoint(snapshot(done, best), name.str());
    }
  }
  save_checkpoint(snapshot(cfg_.total_iterations, best), result.final_checkpoint);
  result.best_val_dsc = best;
  if (result.best_checkpoint.empty() && fs::exists(best_path)) result.best_checkpoint = best_path;
  return result;
}

MetricsReport evaluate_checkpoint(const std::string& checkpoint_path, const Dataset& ds,
                                  int level) {
  const Checkpoint c = load_checkpoint(checkpoint_path);
  ExperimentConfig cfg = config_from_json(c.config);
  if (cfg.model.base_classes != ds.schema.base_classes) {
    fail("checkpoint was trained for " + std::to_string(cfg.model.base_classes) +
         " base classes but the dataset schema has " + std::to_string(ds.schema.base_classes));
  }
  Model model(cfg.model, Rng::derive(cfg.seed, 0));
  auto& params = model.params();
  for (Param& p : params) {
    bool found = false;
    for (const Param& a : c.arrays) {
      if (a.name != p.name) continue;
      if (!a.value.same_shape(p.value)) fail("checkpoint array '" + p.name + "' has the wrong shape");
      std::memcpy(p.value.data(), a.value.data(), (size_t)p.value.numel() * sizeof(float));
      found = true;
      break;
    }
    if (!found) fail("checkpoint is missing array '" + p.name + "'");
  }
  std::vector<LabelMap> preds, gts;
  Tensor img({1, 1, (int64_t)ds.size, (int64_t)ds.size});
  for (const DatasetSample& s : ds.test) {
    std::memcpy(img.data(), s.image.data(), s.image.size() * sizeof(float));
    preds.push_back(model.predict(img, ds.schema, level));
    gts.push_back(s.label);
  }
  return evaluate(preds, gts, ds.schema, level);
}

}  // namespace lumos
