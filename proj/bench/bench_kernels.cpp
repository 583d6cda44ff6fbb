// Parallel kernels against their serial reference paths.

#include <benchmark/benchmark.h>

#include <memory>

#include "propdet/features.hpp"
#include "propdet/linear_models.hpp"
#include "propdet/neural_core.hpp"
#include "propdet/synthetic.hpp"

namespace {

using namespace propdet;

struct Corpus {
    SyntheticLexicon lex = make_synthetic_lexicon(11);
    Dataset ds;
    FeatureSpace space;
    std::vector<SparseVector> X;
    LinearModel model;
    std::shared_ptr<const EmbeddingTable> emb;
    NeuralModel net;
    std::vector<Sequence> seqs;

    Corpus() {
        DomainSpec spec;
        spec.n_docs = 2000;
        spec.max_sentences = 3;
        ds = generate_domain(lex, spec);
        FeatureSpec fs;
        fs.groups = {FeatureGroup::WC, FeatureGroup::TIW, FeatureGroup::TIG};
        space = fit_feature_space(ds, fs, nullptr, nullptr);
        X = featurize_all_serial(ds.documents, space);
        model.kind = LinearKind::LR;
        model.weights.assign(space.dim(), 0.01);
        emb = std::make_shared<const EmbeddingTable>(make_synthetic_embeddings(lex, 32, 11));
        NetArch arch;
        arch.hidden = 32;
        arch.dense = {32};
        net = init_model(emb, arch, 11);
        for (const auto& d : ds.documents) seqs.push_back(neural_tokens(d, nullptr));
    }
};

const Corpus& corpus() {
    static const Corpus c;
    return c;
}

void BM_FeaturizeSerial(benchmark::State& st) {
    const auto& c = corpus();
    for (auto _ : st) benchmark::DoNotOptimize(featurize_all_serial(c.ds.documents, c.space));
}
void BM_FeaturizeParallel(benchmark::State& st) {
    const auto& c = corpus();
    for (auto _ : st) benchmark::DoNotOptimize(featurize_all(c.ds.documents, c.space));
}
void BM_PredictSerial(benchmark::State& st) {
    const auto& c = corpus();
    for (auto _ : st) benchmark::DoNotOptimize(predict_labels_serial(c.model, c.X));
}
void BM_PredictParallel(benchmark::State& st) {
    const auto& c = corpus();
    for (auto _ : st) benchmark::DoNotOptimize(predict_labels(c.model, c.X));
}
void BM_ScoreSerial(benchmark::State& st) {
    const auto& c = corpus();
    for (auto _ : st) benchmark::DoNotOptimize(score_all_serial(c.net, c.seqs));
}
void BM_ScoreParallel(benchmark::State& st) {
    const auto& c = corpus();
    for (auto _ : st) benchmark::DoNotOptimize(score_all(c.net, c.seqs));
}

}  // namespace

BENCHMARK(BM_FeaturizeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeaturizeParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
