#include "mildl/experiment.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "mildl/random.hpp"
#include "mildl/solver.hpp"

namespace mildl {

MulticlassRunResult run_multiclass(const LabeledInstances& train_table,
                                   const LabeledInstances& test_table,
                                   const MulticlassRunConfig& config,
                                   std::uint64_t seed) {
    if (config.classes.empty())
        throw validation_error("experiment: no classes configured");
    if (train_table.features.rows() != test_table.features.rows())
        throw validation_error("experiment: train/test dimension mismatch");

    const int C = int(config.classes.size());
    MulticlassRunResult res;
    res.model.dictionaries.resize(std::size_t(C));
    res.model.hyperparams.resize(std::size_t(C));

    // one training job per class; bag sampling and fit are seeded per class
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&]() {
        for (int c = next.fetch_add(1); c < C; c = next.fetch_add(1)) {
            try {
                const int cls = config.classes[std::size_t(c)];
                Hyperparams hp = config.hp;
                hp.seed = seed * 1000003ULL + std::uint64_t(c);
                const MILDataset bags = make_bags(
                    train_table, cls, config.protocol.pos_bags,
                    config.protocol.neg_bags, config.protocol.pos_bag_size,
                    config.protocol.targets_per_pos_bag, hp.seed,
                    config.protocol.neg_bag_size);
                FitResult fitres = fit(bags, hp);
                res.model.dictionaries[std::size_t(c)] = std::move(fitres.dict);
                res.model.hyperparams[std::size_t(c)] = hp;
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int nthreads = std::max(1, std::min(config.threads, C));
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    // test subset: deterministic draw from the test table
    Matrix X;
    std::vector<int> truth;
    if (config.test_instances > 0 && config.test_instances < test_table.size()) {
        Rng rng(seed ^ 0x7e57da7aULL);
        const auto sel =
            rng.sample_without_replacement(test_table.size(), config.test_instances);
        X.resize(test_table.features.rows(), config.test_instances);
        truth.reserve(std::size_t(config.test_instances));
        for (Index j = 0; j < config.test_instances; ++j) {
            X.col(j) = test_table.features.col(sel[std::size_t(j)]);
            truth.push_back(test_table.labels[std::size_t(sel[std::size_t(j)])]);
        }
    } else {
        X = test_table.features;
        truth = test_table.labels;
    }

    const auto preds = classify_batch(X, res.model, config.coding_iters);
    res.predicted.reserve(preds.size());
    res.truth.reserve(preds.size());
    std::vector<int> truth_ids, pred_ids;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        // map raw class labels onto [0, C) slots
        int t_slot = -1;
        for (int c = 0; c < C; ++c)
            if (config.classes[std::size_t(c)] == truth[i]) t_slot = c;
        if (t_slot < 0)
            throw validation_error("experiment: test label " +
                                   std::to_string(truth[i]) +
                                   " not among the configured classes");
        res.predicted.push_back(preds[i].label);
        res.truth.push_back(t_slot);
    }
    const auto conf = multiclass_accuracy(res.predicted, res.truth, C);
    res.accuracy = conf.accuracy;
    res.confusion = conf.confusion;
    return res;
}

SynthDetectionResult run_synth_detection(const SynthSpec& spec,
                                         const Hyperparams& hp,
                                         const std::vector<double>& fpr_grid,
                                         int coding_iters) {
    const SynthProblem prob = synth_generate(spec);
    Hyperparams hp_run = hp;
    hp_run.seed = spec.seed;
    const FitResult fitres = fit(prob.data, hp_run);

    const FlatView view = flatten(prob.data);
    const auto scores = detect_batch(view.X, fitres.dict, hp_run.lambda, coding_iters);
    std::vector<double> conf(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) conf[i] = scores[i].confidence;

    SynthDetectionResult res;
    res.curve = roc(conf, prob.z);
    res.auc = res.curve.auc;
    for (double f : fpr_grid) res.tpr_at.push_back(tpr_at_fpr(res.curve, f));
    return res;
}

}  // namespace mildl
