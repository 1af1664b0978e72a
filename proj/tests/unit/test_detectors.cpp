#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "sidetect/detectors/detector.hpp"
#include "sidetect/detectors/logistic.hpp"
#include "sidetect/detectors/rank_features.hpp"
#include "sidetect/detectors/statistical.hpp"
#include "sidetect/detectors/training.hpp"
#include "sidetect/synthetic.hpp"
#include "sidetect/text.hpp"
#include "test_util.hpp"

using namespace sidetect;
using namespace sidetect::detectors;
using sidetect::testing::TempDir;

namespace {

// Ranks read off fixed per-token values: the token string is its rank.
class FixedRankScorer : public RankScorer {
public:
    std::vector<size_t> token_ranks(std::string_view s) const override {
        std::vector<size_t> out;
        for (const auto& t : text::whitespace_tokens(s)) out.push_back(std::stoul(t));
        return out;
    }
    std::string id() const override { return "fixed"; }
};

// Mean log-loss gradient plus the L2 term, computed independently of the
// Newton solver.
std::array<double, 5> loss_gradient(const LogisticModel& m, const std::vector<std::array<double, 4>>& x,
                                    const std::vector<Label>& y, double l2) {
    std::array<double, 5> g{};
    for (size_t i = 0; i < x.size(); ++i) {
        double z = m.bias;
        for (int k = 0; k < 4; ++k) z += m.weights[k] * x[i][k];
        double r = 1.0 / (1.0 + std::exp(-z)) - (y[i] == Label::model ? 1.0 : 0.0);
        for (int k = 0; k < 4; ++k) g[k] += r * x[i][k] / static_cast<double>(x.size());
        g[4] += r / static_cast<double>(x.size());
    }
    for (int k = 0; k < 4; ++k) g[k] += l2 * m.weights[k];
    return g;
}

}  // namespace

TEST_CASE("rank buckets on a fixed scorer") {
    FixedRankScorer scorer;
    auto f = extract_rank_features("1 7 150 3 2000", scorer);
    CHECK(f.bucket_counts == std::array<size_t, 4>{3, 0, 1, 1});
    CHECK(f.token_count == 5);
    CHECK(f.normalized[0] == doctest::Approx(0.6));
    CHECK(f.normalized[3] == doctest::Approx(0.2));

    // Every token is the argmax: all mass in the first bucket.
    auto g = extract_rank_features("1 1 1 1", scorer);
    CHECK(g.bucket_counts == std::array<size_t, 4>{4, 0, 0, 0});

    CHECK(rank_bucket(1) == 0);
    CHECK(rank_bucket(10) == 0);
    CHECK(rank_bucket(11) == 1);
    CHECK(rank_bucket(100) == 1);
    CHECK(rank_bucket(101) == 2);
    CHECK(rank_bucket(1000) == 2);
    CHECK(rank_bucket(1001) == 3);
    CHECK_THROWS_AS(features_from_ranks({}), DataError);
    CHECK_THROWS_AS(extract_rank_features("   ", scorer), DataError);
}

TEST_CASE("bucket counts partition the tokens") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<size_t> ranks(1 + rng() % 60);
        for (auto& r : ranks) r = 1 + rng() % 5000;
        auto f = features_from_ranks(ranks);
        CHECK(std::accumulate(f.bucket_counts.begin(), f.bucket_counts.end(), size_t{0}) == ranks.size());
        double sum = std::accumulate(f.normalized.begin(), f.normalized.end(), 0.0);
        CHECK(sum == doctest::Approx(1.0));
    }
}

TEST_CASE("Kneser-Ney trigram distributions and ranks") {
    KneserNeyTrigram lm;
    lm.train({"the cat sat on the mat", "the dog sat on the log", "a cat ran"});
    const int V = static_cast<int>(lm.vocab_size());

    SUBCASE("every context yields a proper distribution") {
        for (int u = 0; u < V; ++u)
            for (int v = 0; v < V; ++v) {
                auto d = lm.distribution(u, v);
                double sum = std::accumulate(d.begin(), d.end(), 0.0);
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
                for (double p : d) CHECK(p > 0.0);
            }
    }

    SUBCASE("ranks agree with sorting the distribution") {
        std::string sentence = "the cat sat on the log today";
        auto ranks = lm.token_ranks(sentence);
        auto tokens = text::model_tokens(sentence);
        REQUIRE(ranks.size() == tokens.size());
        int u = KneserNeyTrigram::kBos, v = KneserNeyTrigram::kBos;
        for (size_t i = 0; i < tokens.size(); ++i) {
            int w = lm.token_id(tokens[i]);
            auto d = lm.distribution(u, v);
            size_t better = 0;
            for (int k = 0; k < V; ++k)
                if (d[k] > d[w] || (d[k] == d[w] && k < w)) ++better;
            CHECK(ranks[i] == better + 1);
            u = v;
            v = w;
        }
        CHECK(lm.token_id("today") == KneserNeyTrigram::kUnk);
    }

    SUBCASE("seen continuation is the top choice") {
        KneserNeyTrigram rep;
        rep.train({"a b c a b c a b c"});
        auto ranks = rep.token_ranks("a b c");
        CHECK(ranks[1] == 1);
        CHECK(ranks[2] == 1);
    }

    SUBCASE("json round trip keeps the ranks") {
        auto copy = KneserNeyTrigram::from_json(lm.to_json());
        CHECK(copy.token_ranks("the dog ran on a mat") == lm.token_ranks("the dog ran on a mat"));
        CHECK(copy.id() == lm.id());
    }
}

TEST_CASE("logistic regression") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_x = [&] {
        std::array<double, 4> x{};
        for (auto& v : x) v = u(rng);
        return x;
    };

    SUBCASE("separable data is fit and the optimum has zero gradient") {
        std::vector<std::array<double, 4>> x;
        std::vector<Label> y;
        for (int i = 0; i < 200; ++i) {
            auto xi = random_x();
            Label label = xi[0] > 0.5 ? Label::model : Label::human;
            if (std::abs(xi[0] - 0.5) < 0.1) continue;
            x.push_back(xi);
            y.push_back(label);
        }
        LogisticOptions opt;
        auto m = train_logistic(x, y, opt);
        CHECK(m.training_accuracy == 1.0);
        CHECK(m.weights[0] > 0.0);
        for (double g : loss_gradient(m, x, y, opt.l2)) CHECK(std::abs(g) < 1e-6);
    }

    SUBCASE("random labels stay near chance") {
        std::vector<std::array<double, 4>> x;
        std::vector<Label> y;
        for (int i = 0; i < 2000; ++i) {
            x.push_back(random_x());
            y.push_back(rng() % 2 ? Label::model : Label::human);
        }
        auto m = train_logistic(x, y);
        CHECK(std::abs(m.training_accuracy - 0.5) <= 0.05);
    }

    SUBCASE("duplicating the data leaves the fit unchanged") {
        std::vector<std::array<double, 4>> x;
        std::vector<Label> y;
        for (int i = 0; i < 100; ++i) {
            auto xi = random_x();
            x.push_back(xi);
            y.push_back(xi[1] + 0.3 * u(rng) > 0.6 ? Label::model : Label::human);
        }
        auto a = train_logistic(x, y);
        auto x2 = x;
        auto y2 = y;
        x2.insert(x2.end(), x.begin(), x.end());
        y2.insert(y2.end(), y.begin(), y.end());
        auto b = train_logistic(x2, y2);
        for (int k = 0; k < 4; ++k) CHECK(a.weights[k] == doctest::Approx(b.weights[k]).epsilon(1e-8));
        CHECK(a.bias == doctest::Approx(b.bias).epsilon(1e-8));
    }

    SUBCASE("score is monotone in a positively weighted feature") {
        std::vector<std::array<double, 4>> x;
        std::vector<Label> y;
        for (int i = 0; i < 300; ++i) {
            auto xi = random_x();
            x.push_back(xi);
            y.push_back(xi[2] + 0.5 * u(rng) > 0.75 ? Label::model : Label::human);
        }
        auto m = train_logistic(x, y);
        REQUIRE(m.weights[2] > 0.0);
        std::array<double, 4> probe{0.3, 0.3, 0.0, 0.3};
        double prev = 0.0;
        for (int s = 0; s <= 10; ++s) {
            probe[2] = s / 10.0;
            double p = m.score(probe);
            CHECK(p > prev);
            CHECK(p < 1.0);
            prev = p;
        }
    }

    SUBCASE("one class is rejected") {
        std::vector<std::array<double, 4>> x{random_x(), random_x()};
        CHECK_THROWS_AS(train_logistic(x, {Label::human, Label::human}), DataError);
        CHECK_THROWS_AS(train_logistic({}, {}), DataError);
    }

    SUBCASE("json round trip") {
        LogisticModel m;
        m.weights = {1.5, -2.0, 0.25, 0.0};
        m.bias = -0.5;
        m.scoring_lm_id = "kn3";
        auto back = LogisticModel::from_json(m.to_json());
        CHECK(back.weights == m.weights);
        CHECK(back.bias == m.bias);
        CHECK(back.scoring_lm_id == "kn3");
    }
}

TEST_CASE("statistical detector separates rank-biased text") {
    auto train = synthetic::rank_biased_corpus(200, 1, "train");
    auto test = synthetic::rank_biased_corpus(100, 1, "test");
    TempDir dir;
    auto result = train_statistical(train, {}, dir.path());
    double acc = accuracy(result.detector, test);
    CHECK(acc >= 0.95);

    SUBCASE("the handle reloads an identical detector") {
        auto handle = DetectorHandle::load(dir.path() / "epoch-1" / "handle.json");
        CHECK(handle.kind == DetectorKind::statistical);
        auto loaded = load_detector(handle);
        for (size_t i = 0; i < 20; ++i) {
            auto a = result.detector.predict(DetectorInput{test[i].text});
            auto b = loaded->predict(DetectorInput{test[i].text});
            CHECK(a.label == b.label);
            CHECK(a.score == doctest::Approx(b.score).epsilon(1e-12));
        }
        CHECK(read_train_log(dir.path()).size() == 1);
    }

    SUBCASE("an instruction prompt is the wrong input kind") {
        instruction::InstructionPrompt prompt;
        prompt.assembled = "whatever";
        CHECK_THROWS_AS(result.detector.predict(DetectorInput{prompt}), KindMismatch);
    }
}

TEST_CASE("training configuration and checkpoint selection") {
    TrainConfig defaults;
    CHECK(defaults.epochs == 4);
    CHECK(defaults.learning_rate == 1e-4);
    CHECK(defaults.batch_size == 32);
    CHECK(TrainConfig::from_json(defaults.to_json()) == defaults);
    TrainConfig bad;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.learning_rate = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    auto ck = [](int epoch, double acc) { return Checkpoint{epoch, "run/epoch-" + std::to_string(epoch), acc}; };
    CHECK(select_best_checkpoint({ck(1, 0.7), ck(2, 0.9), ck(3, 0.85)}).epoch == 2);
    CHECK(select_best_checkpoint({ck(1, 0.8), ck(2, 0.8)}).epoch == 1);
    CHECK_THROWS_AS(select_best_checkpoint(std::vector<Checkpoint>{}), TrainingError);
    CHECK_THROWS_AS(best_index({}), TrainingError);
    CHECK(best_index({0.1, 0.3, 0.3, 0.2}) == 1);

    auto via_fn = select_best_checkpoint({ck(1, 0.0), ck(2, 0.0), ck(3, 0.0)},
                                         [](const Checkpoint& c) { return c.epoch == 3 ? 0.5 : 0.4; });
    CHECK(via_fn.epoch == 3);

    auto order = epoch_order(50, 7, 2);
    CHECK(order == epoch_order(50, 7, 2));
    CHECK(order != epoch_order(50, 7, 3));
    std::set<size_t> seen(order.begin(), order.end());
    CHECK(seen.size() == 50);
    CHECK(*seen.rbegin() == 49);
}

TEST_CASE("train log round trip") {
    TempDir dir;
    append_train_log(dir.path(), {1, 0.5, std::nullopt});
    append_train_log(dir.path(), {2, 0.25, 0.75});
    auto log = read_train_log(dir.path());
    REQUIRE(log.size() == 2);
    CHECK(!log[0].val_accuracy);
    CHECK(*log[1].val_accuracy == 0.75);
    CHECK(log[1].loss == 0.25);
}

TEST_CASE("detector kinds") {
    CHECK(parse_detector_kind("statistical") == DetectorKind::statistical);
    CHECK(parse_detector_kind("encoder") == DetectorKind::encoder);
    CHECK(parse_detector_kind("generative") == DetectorKind::generative);
    CHECK_THROWS_AS(parse_detector_kind("roberta"), ConfigError);
    DetectorHandle h{DetectorKind::encoder, "/nonexistent/artifact", json::object()};
    CHECK_THROWS_AS(load_detector(h), DataError);
}
