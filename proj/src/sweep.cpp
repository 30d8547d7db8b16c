#include "raresynth/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "raresynth/checkpoint.hpp"
#include "raresynth/errors.hpp"
#include "raresynth/io_util.hpp"
#include "raresynth/svg.hpp"

namespace raresynth {

namespace {

// Stream roles for the sweep-level seed splits.
constexpr std::uint64_t kRoleSplit = 101;
constexpr std::uint64_t kRolePretrainData = 102;
constexpr std::uint64_t kRolePretrain = 103;
constexpr std::uint64_t kRoleLora = 104;
constexpr std::uint64_t kRolePool = 105;
constexpr std::uint64_t kRoleFolds = 106;
constexpr std::uint64_t kRoleAssemble = 107;
constexpr std::uint64_t kRoleClassifier = 108;

struct RunKey {
  double ratio = 0.0;
  int ratio_index = 0;
  AssembleMode mode = AssembleMode::mixed;
  int fold = 0;
  int seed_index = 0;
  std::uint64_t seed_value = 0;
};

Dataset subset(const Dataset& d, const std::vector<int>& idx) {
  Dataset out;
  out.domain = d.domain;
  out.note = d.note;
  out.samples.reserve(idx.size());
  for (int i : idx) out.samples.push_back(d.samples[static_cast<std::size_t>(i)]);
  return out;
}

template <typename Fn>
auto with_run_context(const RunKey& key, Fn&& fn) {
  char ctx[96];
  std::snprintf(ctx, sizeof(ctx), " (ratio=%g, mode=%s, fold=%d, seed=%llu)", key.ratio,
                assemble_mode_name(key.mode).c_str(), key.fold,
                static_cast<unsigned long long>(key.seed_value));
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) + ctx);
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + ctx);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(e.what()) + ctx);
  }
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

}  // namespace

Dataset build_pretrain_dataset(const PipelineConfig& cfg) {
  Dataset data;
  data.domain = domain_name(cfg.domain);
  data.note = "base-model pretraining corpus";
  const std::uint64_t ds = derive_seed(cfg.seed, kRolePretrainData);
  data.samples.reserve(static_cast<std::size_t>(2 * cfg.pretrain.n_per_class));
  for (int i = 0; i < cfg.pretrain.n_per_class; ++i) {
    data.samples.push_back(gen_domain(cfg.domain, cfg.domain_params, Label::negative,
                                      derive_seed(ds, 0, static_cast<std::uint64_t>(i))));
    data.samples.push_back(gen_domain(cfg.domain, cfg.domain_params, Label::positive,
                                      derive_seed(ds, 1, static_cast<std::uint64_t>(i))));
  }
  return data;
}

PretrainResult pretrain_base_model(const PipelineConfig& cfg) {
  const NoiseSchedule sched = build_noise_schedule(cfg.schedule.T, cfg.schedule.kind);
  const Dataset data = build_pretrain_dataset(cfg);
  PretrainConfig pc{cfg.model, cfg.pretrain.steps, cfg.pretrain.batch, cfg.pretrain.lr,
                    cfg.pretrain.p_uncond};
  std::fprintf(stderr, "[pretrain] %d steps over %zu images\n", pc.steps,
               data.samples.size());
  return pretrain_diffusion(data, pc, sched, derive_seed(cfg.seed, kRolePretrain));
}

ImbalancedSplit make_split_for(const PipelineConfig& cfg) {
  return make_imbalanced_split(cfg.domain, cfg.domain_params, cfg.data.n_neg,
                               cfg.data.n_pos_train, cfg.data.n_pos_lora,
                               cfg.data.test_fraction, derive_seed(cfg.seed, kRoleSplit));
}

FinetuneResult finetune_adapter_for(const PipelineConfig& cfg, const UNet<float>& base,
                                    const Dataset& rare) {
  const NoiseSchedule sched = build_noise_schedule(cfg.schedule.T, cfg.schedule.kind);
  const std::uint64_t lora_seed = derive_seed(cfg.seed, kRoleLora);
  AdaptedModel<float> adapted = attach_lora(base, cfg.lora, lora_seed);
  std::fprintf(stderr, "[finetune] %lld trainable adapter values, %d steps\n",
               static_cast<long long>(count_lora_params(adapted)), cfg.lora.steps);
  return finetune_lora(adapted, rare, sched, lora_seed);
}

Dataset generate_pool_for(const PipelineConfig& cfg, UNet<float>& merged, int count) {
  const NoiseSchedule sched = build_noise_schedule(cfg.schedule.T, cfg.schedule.kind);
  SamplerConfig sc;
  sc.steps = cfg.sampler.steps;
  sc.guidance_scale = cfg.sampler.guidance_scale;
  sc.eta = cfg.sampler.eta;
  return generate_pool(merged, sched, sc, count, derive_seed(cfg.seed, kRolePool),
                       cfg.domain_params.image_size, cfg.domain_params.image_size);
}

SweepOutput run_sweep(const PipelineConfig& cfg) {
  if (cfg.sweep.ratios.empty())
    throw std::invalid_argument("run_sweep: ratio grid is empty");
  if (cfg.sweep.seeds.empty())
    throw std::invalid_argument("run_sweep: seeds list is empty");

  const NoiseSchedule sched = build_noise_schedule(cfg.schedule.T, cfg.schedule.kind);
  const int side = cfg.domain_params.image_size;

  SweepOutput out;

  // Real data: training pool and reserved rare set. Fold-based tests come
  // from the training pool; the extra holdout split is not used by the sweep.
  const ImbalancedSplit split = make_split_for(cfg);

  // Base model.
  if (!cfg.sweep.base_checkpoint.empty()) {
    LoadedDiffusion loaded = load_diffusion_checkpoint(cfg.sweep.base_checkpoint);
    if (loaded.schedule_T != cfg.schedule.T)
      throw std::invalid_argument("run_sweep: base checkpoint was trained with T=" +
                                  std::to_string(loaded.schedule_T) +
                                  ", config says T=" + std::to_string(cfg.schedule.T));
    out.base_model = std::make_shared<UNet<float>>(std::move(loaded.model));
    std::fprintf(stderr, "[sweep] loaded base model from %s\n",
                 cfg.sweep.base_checkpoint.c_str());
  } else {
    PretrainResult pr = pretrain_base_model(cfg);
    out.base_model = std::make_shared<UNet<float>>(std::move(pr.model));
    out.pretrain_log = std::move(pr.log);
  }

  // Adapter + synthetic pool. The default is one adapter for the whole sweep;
  // refit_lora_per_fold repeats fine-tuning and generation per fold.
  const int n_folds = cfg.sweep.folds;
  std::vector<Dataset> pools;
  const int n_pool_fits = cfg.sweep.refit_lora_per_fold ? n_folds : 1;
  for (int f = 0; f < n_pool_fits; ++f) {
    const std::uint64_t lora_seed =
        cfg.sweep.refit_lora_per_fold
            ? derive_seed(cfg.seed, kRoleLora, static_cast<std::uint64_t>(f))
            : derive_seed(cfg.seed, kRoleLora);
    AdaptedModel<float> adapted = attach_lora(*out.base_model, cfg.lora, lora_seed);
    std::fprintf(stderr, "[sweep] fine-tuning adapter (%lld trainable values)\n",
                 static_cast<long long>(count_lora_params(adapted)));
    FinetuneResult ft = finetune_lora(adapted, split.lora_set, sched, lora_seed);
    UNet<float> merged = merge_lora(ft.model);
    SamplerConfig sc;
    sc.steps = cfg.sampler.steps;
    sc.guidance_scale = cfg.sampler.guidance_scale;
    sc.eta = cfg.sampler.eta;
    const std::uint64_t pool_seed =
        cfg.sweep.refit_lora_per_fold
            ? derive_seed(cfg.seed, kRolePool, static_cast<std::uint64_t>(f))
            : derive_seed(cfg.seed, kRolePool);
    std::fprintf(stderr, "[sweep] generating pool of %d samples\n", cfg.sweep.pool_size);
    pools.push_back(
        generate_pool(merged, sched, sc, cfg.sweep.pool_size, pool_seed, side, side));
    if (f == 0) {
      out.adapter = std::make_shared<AdaptedModel<float>>(std::move(ft.model));
      out.finetune_log = std::move(ft.log);
      out.pool = pools.front();
    }
  }

  // Fold plans per sweep seed; identical across ratios and modes.
  std::vector<int> labels;
  labels.reserve(split.train.samples.size());
  for (const auto& s : split.train.samples)
    labels.push_back(s.label == Label::positive ? 1 : 0);
  std::vector<FoldPlan> plans;
  for (std::size_t si = 0; si < cfg.sweep.seeds.size(); ++si)
    plans.push_back(stratified_kfold(
        labels, n_folds, derive_seed(cfg.seed, kRoleFolds, cfg.sweep.seeds[si])));

  // Enumerate runs.
  std::vector<RunKey> keys;
  const double max_ratio = cfg.sweep.ratios.back();
  for (std::size_t ri = 0; ri < cfg.sweep.ratios.size(); ++ri)
    for (std::size_t si = 0; si < cfg.sweep.seeds.size(); ++si)
      for (int f = 0; f < n_folds; ++f)
        keys.push_back({cfg.sweep.ratios[ri], static_cast<int>(ri), AssembleMode::mixed,
                        f, static_cast<int>(si), cfg.sweep.seeds[si]});
  if (cfg.sweep.include_synth_only && max_ratio > 0.0)
    for (std::size_t si = 0; si < cfg.sweep.seeds.size(); ++si)
      for (int f = 0; f < n_folds; ++f)
        keys.push_back({max_ratio, static_cast<int>(cfg.sweep.ratios.size()) - 1,
                        AssembleMode::synth_only, f, static_cast<int>(si),
                        cfg.sweep.seeds[si]});

  // Pool id set for the test-purity assertion.
  std::set<std::string> pool_ids;
  for (const auto& p : pools)
    for (const auto& s : p.samples) pool_ids.insert(s.id);

  out.results.resize(keys.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first_error;
  std::shared_ptr<ClassifierModel<float>> reference;

#ifdef _OPENMP
  const int omp_total = omp_get_max_threads();
#else
  const int omp_total = 1;
#endif
  const int jobs = std::max(1, cfg.jobs);

  auto worker = [&]() {
#ifdef _OPENMP
    omp_set_num_threads(std::max(1, omp_total / jobs));
#endif
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= keys.size()) break;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (first_error) break;
      }
      const RunKey& key = keys[i];
      try {
        with_run_context(key, [&]() {
          const auto t0 = std::chrono::steady_clock::now();
          const FoldPlan& plan = plans[static_cast<std::size_t>(key.seed_index)];
          const auto& test_idx =
              plan.test_indices[static_cast<std::size_t>(key.fold)];
          std::vector<char> in_test(split.train.samples.size(), 0);
          for (int t : test_idx) in_test[static_cast<std::size_t>(t)] = 1;
          std::vector<int> train_idx;
          for (std::size_t s = 0; s < split.train.samples.size(); ++s)
            if (!in_test[s]) train_idx.push_back(static_cast<int>(s));

          const Dataset test = subset(split.train, test_idx);
          for (const auto& s : test.samples) {
            if (s.origin != Origin::real)
              throw std::logic_error("test split contains a synthetic sample");
            if (pool_ids.count(s.id))
              throw std::logic_error("test split shares an id with the pool");
          }
          const Dataset train_rest = subset(split.train, train_idx);
          const Dataset& pool =
              pools[cfg.sweep.refit_lora_per_fold ? static_cast<std::size_t>(key.fold)
                                                  : 0];
          // The assembly stream must not depend on the ratio: selections for
          // smaller ratios are then prefixes of larger ones.
          const Dataset assembled = assemble_training_set(
              train_rest, pool, key.ratio, key.mode,
              derive_seed(cfg.seed, kRoleAssemble, key.seed_value,
                          static_cast<std::uint64_t>(key.fold)));

          // Documented per-run stream split: (global, ratio idx, mode, fold, rep).
          const std::uint64_t run_seed = derive_seed(
              cfg.seed, kRoleClassifier, static_cast<std::uint64_t>(key.ratio_index),
              static_cast<std::uint64_t>(key.mode), static_cast<std::uint64_t>(key.fold),
              static_cast<std::uint64_t>(key.seed_index));
          ClassifierModel<float> model =
              train_classifier(assembled, cfg.classifier, run_seed);

          const std::vector<double> scores = predict_scores(model, test);
          std::vector<int> test_labels;
          test_labels.reserve(test.samples.size());
          for (const auto& s : test.samples)
            test_labels.push_back(s.label == Label::positive ? 1 : 0);

          RunResult r;
          r.domain = domain_name(cfg.domain);
          r.mode = key.mode;
          r.ratio = key.ratio;
          r.fold = key.fold;
          r.seed = key.seed_value;
          r.confusion = confusion_at_threshold(scores, test_labels, cfg.threshold);
          const PrfScores prf = f1_precision_recall(r.confusion);
          r.f1 = prf.f1;
          r.precision = prf.precision;
          r.recall = prf.recall;
          r.pr_auc = pr_auc(scores, test_labels);
          r.wall_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count();
          {
            std::lock_guard<std::mutex> lock(mu);
            out.results[i] = r;
            if (key.mode == AssembleMode::mixed &&
                key.ratio_index == static_cast<int>(cfg.sweep.ratios.size()) - 1 &&
                key.fold == 0 && key.seed_index == 0)
              reference = std::make_shared<ClassifierModel<float>>(std::move(model));
            std::fprintf(stderr,
                         "[sweep] %3zu/%zu ratio=%-4g mode=%-10s fold=%d seed=%llu  "
                         "f1=%.3f recall=%.3f pr_auc=%.3f  (%.1fs)\n",
                         i + 1, keys.size(), key.ratio,
                         assemble_mode_name(key.mode).c_str(), key.fold,
                         static_cast<unsigned long long>(key.seed_value), r.f1,
                         r.recall, r.pr_auc, r.wall_seconds);
          }
          return 0;
        });
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        break;
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
#ifdef _OPENMP
    omp_set_num_threads(omp_total);
#endif
  }
  if (first_error) std::rethrow_exception(first_error);

  out.reference_classifier = reference;

  std::sort(out.results.begin(), out.results.end(),
            [](const RunResult& a, const RunResult& b) {
              if (a.mode != b.mode) return a.mode < b.mode;
              if (a.ratio != b.ratio) return a.ratio < b.ratio;
              if (a.seed != b.seed) return a.seed < b.seed;
              return a.fold < b.fold;
            });
  out.aggregate = aggregate_results(out.results);
  return out;
}

std::vector<AggregateRow> aggregate_results(const std::vector<RunResult>& rows) {
  std::vector<AggregateRow> agg;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    std::vector<double> f1, pr, rec, prec;
    while (j < rows.size() && rows[j].mode == rows[i].mode &&
           rows[j].ratio == rows[i].ratio && rows[j].domain == rows[i].domain) {
      f1.push_back(rows[j].f1);
      pr.push_back(rows[j].pr_auc);
      rec.push_back(rows[j].recall);
      prec.push_back(rows[j].precision);
      ++j;
    }
    AggregateRow a;
    a.domain = rows[i].domain;
    a.mode = rows[i].mode;
    a.ratio = rows[i].ratio;
    a.n_runs = static_cast<int>(j - i);
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    a.f1_mean = mean(f1);
    a.f1_std = sample_std(f1, a.f1_mean);
    a.pr_auc_mean = mean(pr);
    a.pr_auc_std = sample_std(pr, a.pr_auc_mean);
    a.recall_mean = mean(rec);
    a.recall_std = sample_std(rec, a.recall_mean);
    a.precision_mean = mean(prec);
    a.precision_std = sample_std(prec, a.precision_mean);
    agg.push_back(a);
    i = j;
  }
  return agg;
}

std::string results_csv(const std::vector<RunResult>& rows) {
  std::ostringstream out;
  out << "domain,mode,ratio,fold,seed,f1,pr_auc,recall,precision,tp,fp,fn,tn,"
         "wall_seconds\n";
  for (const auto& r : rows) {
    out << r.domain << ',' << assemble_mode_name(r.mode) << ',' << format_sig6(r.ratio)
        << ',' << r.fold << ',' << r.seed << ',' << format_sig6(r.f1) << ','
        << format_sig6(r.pr_auc) << ',' << format_sig6(r.recall) << ','
        << format_sig6(r.precision) << ',' << r.confusion.tp << ',' << r.confusion.fp
        << ',' << r.confusion.fn << ',' << r.confusion.tn << ','
        << format_sig6(0.0) << '\n';  // timings go to stderr, kept out of the
                                      // byte-reproducible outputs
  }
  return out.str();
}

std::vector<RunResult> parse_results_csv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("results csv: empty file");
  std::vector<RunResult> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 14)
      throw FormatError("results csv line " + std::to_string(lineno) + ": expected 14 "
                        "fields, got " + std::to_string(f.size()));
    RunResult r;
    try {
      r.domain = f[0];
      r.mode = parse_assemble_mode(f[1]);
      r.ratio = std::stod(f[2]);
      r.fold = std::stoi(f[3]);
      r.seed = std::stoull(f[4]);
      r.f1 = std::stod(f[5]);
      r.pr_auc = std::stod(f[6]);
      r.recall = std::stod(f[7]);
      r.precision = std::stod(f[8]);
      r.confusion.tp = std::stoll(f[9]);
      r.confusion.fp = std::stoll(f[10]);
      r.confusion.fn = std::stoll(f[11]);
      r.confusion.tn = std::stoll(f[12]);
      r.wall_seconds = std::stod(f[13]);
    } catch (const std::exception&) {
      throw FormatError("results csv line " + std::to_string(lineno) +
                        ": unparsable field");
    }
    rows.push_back(r);
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "domain,mode,ratio,n_runs,f1_mean,f1_std,pr_auc_mean,pr_auc_std,recall_mean,"
         "recall_std,precision_mean,precision_std\n";
  for (const auto& a : rows) {
    out << a.domain << ',' << assemble_mode_name(a.mode) << ',' << format_sig6(a.ratio)
        << ',' << a.n_runs << ',' << format_sig6(a.f1_mean) << ','
        << format_sig6(a.f1_std) << ',' << format_sig6(a.pr_auc_mean) << ','
        << format_sig6(a.pr_auc_std) << ',' << format_sig6(a.recall_mean) << ','
        << format_sig6(a.recall_std) << ',' << format_sig6(a.precision_mean) << ','
        << format_sig6(a.precision_std) << '\n';
  }
  return out.str();
}

std::string sweep_plot_svg(const std::vector<AggregateRow>& rows) {
  PlotSeries f1{"F1 (mixed)", "#1f77b4", {}, false};
  PlotSeries pr{"PR-AUC (mixed)", "#2ca02c", {}, false};
  PlotSeries rec{"Recall (mixed)", "#d62728", {}, false};
  PlotSeries f1s{"F1 (synth-only)", "#9467bd", {}, true};
  std::string domain = "sweep";
  for (const auto& a : rows) {
    if (!a.domain.empty()) domain = a.domain;
    if (a.mode == AssembleMode::mixed) {
      f1.points.push_back({a.ratio, a.f1_mean});
      pr.points.push_back({a.ratio, a.pr_auc_mean});
      rec.points.push_back({a.ratio, a.recall_mean});
    } else {
      f1s.points.push_back({a.ratio, a.f1_mean});
    }
  }
  std::vector<PlotSeries> series{f1, pr, rec};
  if (!f1s.points.empty()) series.push_back(f1s);
  return render_line_plot("Synthetic ratio scaling: " + domain,
                          "synthetic-to-real ratio (log scale, 0 pinned left)",
                          "metric", series, /*log_x=*/true);
}

std::string format_report_table(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %-18s %8s %8s %8s\n", "Dataset", "Synth Ratio",
                "F1", "PR-AUC", "Recall");
  out << buf;
  out << std::string(58, '-') << '\n';
  for (const auto& a : rows) {
    std::string ratio = format_sig6(a.ratio) + "x";
    if (a.mode == AssembleMode::synth_only) ratio = "synth-only (" + ratio + ")";
    std::snprintf(buf, sizeof(buf), "%-12s %-18s %8.3f %8.3f %8.3f\n", a.domain.c_str(),
                  ratio.c_str(), a.f1_mean, a.pr_auc_mean, a.recall_mean);
    out << buf;
  }
  return out.str();
}

}  // namespace raresynth
