// Acceptance checks 1-9; one PASS/FAIL (or SKIP) line each.
//
//   uqbench_acceptance [--only N]
//
// Check 9 needs UQBENCH_VAL_MANIFEST (a manifest of ImageNet validation
// images) and exported torchvision weights in UQBENCH_WEIGHTS_DIR.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "support.hpp"
#include "uqbench/runner/experiments.hpp"

using namespace uqbench;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict = Verdict::pass;
    std::string detail;
};

Outcome pass(std::string d = {}) { return {Verdict::pass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Verdict::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Verdict::skip, std::move(d)}; }

MemberPredictionSet set_of(const std::vector<ProbabilityVector>& v) {
    MemberPredictionSet s{"x", {}};
    for (std::size_t i = 0; i < v.size(); ++i) s.entries.push_back({"m" + std::to_string(i), v[i]});
    return s;
}

Outcome voting() {
    const auto& c = uqtest::imagenet();
    const ClassIndex chainsaw = c.resolve("chainsaw"), barrow = c.resolve("wheelbarrow");
    const std::vector<ClassIndex> labels{chainsaw, barrow, barrow, c.resolve("greenhouse"), chainsaw};
    if (majority_vote(labels) != VoteOutcome::no_majority()) return fail_with("majority vote decided");
    const auto p = plurality_vote(labels);
    if (p != VoteOutcome::tie({chainsaw, barrow})) return fail_with("plurality: " + describe(p, c));
    return pass(describe(p, c));
}

Outcome entropy_bounds() {
    ProbabilityVector one_hot(1000, 0.0);
    one_hot[3] = 1.0;
    if (entropy(one_hot) != 0.0) return fail_with("one-hot entropy " + format_fixed(entropy(one_hot)));
    const double uniform = entropy(ProbabilityVector(1000, 1e-3));
    if (std::abs(uniform - 9.9658) > 1e-3) return fail_with("uniform entropy " + format_fixed(uniform));
    std::mt19937_64 rng(2);
    double lo = 1e9, hi = -1e9;
    for (int t = 0; t < 10000; ++t) {
        const double h = entropy(uqtest::random_simplex(rng, 2 + rng() % 999));
        lo = std::min(lo, h);
        hi = std::max(hi, h);
    }
    if (lo < 0.0 || hi > 9.9659) return fail_with("random range [" + format_fixed(lo) + ", " + format_fixed(hi) + "]");
    return pass("uniform " + format_fixed(uniform) + ", random range [" + format_fixed(lo) + ", " + format_fixed(hi) + "]");
}

Outcome ensemble_oracle() {
    std::mt19937_64 rng(3);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 1 + rng() % 10, n = 1 + rng() % 7;
        std::vector<ProbabilityVector> v;
        for (std::size_t m = 0; m < n; ++m) v.push_back(uqtest::random_simplex(rng, k));
        ProbabilityVector mean(k);
        for (std::size_t i = 0; i < k; ++i) {
            long double s = 0;
            for (const auto& p : v) s += p[i];
            mean[i] = static_cast<double>(s / n);
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < k; ++i)
            if (mean[i] > mean[best] + 1e-12) best = i;
        const auto got = probabilistic_average(set_of(v));
        for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, std::abs(got[i] - mean[i]));
        const auto pred = ensemble_predict(set_of(v));
        // Near-ties within rounding may resolve either way; the chosen class must still be maximal.
        if (pred.index != best && std::abs(mean[pred.index] - mean[best]) > 1e-12)
            return fail_with("argmax differs in trial " + std::to_string(t));
        if (std::abs(pred.probability - mean[pred.index]) > 1e-12) return fail_with("probability differs");
    }
    if (worst > 1e-12) return fail_with("max deviation " + std::to_string(worst));
    std::ostringstream os;
    os << "max deviation " << worst;
    return pass(os.str());
}

Outcome metric_oracle() {
    const auto example = set_of({{0.9, 0.1}, {0.8, 0.2}, {1.0, 0.0}, {0.7, 0.3}, {0.6, 0.4}});
    const double m = average_probability(example, 0), v = probability_variance(example, 0);
    if (std::abs(m - 0.8) > 1e-12 || std::abs(v - 0.02) > 1e-12)
        return fail_with("example gives " + format_fixed(m) + ", " + format_fixed(v));
    std::mt19937_64 rng(4);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t k = 1 + rng() % 10, n = 1 + rng() % 7;
        std::vector<ProbabilityVector> vs;
        for (std::size_t i = 0; i < n; ++i) vs.push_back(uqtest::random_simplex(rng, k));
        const ClassIndex c = rng() % k;
        long double s = 0;
        for (const auto& p : vs) s += p[c];
        const long double mean = s / n;
        long double ss = 0;
        for (const auto& p : vs) ss += (p[c] - mean) * (p[c] - mean);
        const auto set = set_of(vs);
        worst = std::max({worst, std::abs(average_probability(set, c) - static_cast<double>(mean)),
                          std::abs(probability_variance(set, c) - static_cast<double>(ss / n))});
    }
    if (worst > 1e-12) return fail_with("max deviation " + std::to_string(worst));
    std::ostringstream os;
    os << "example mean " << m << " variance " << v << ", max deviation " << worst;
    return pass(os.str());
}

Outcome ranking() {
    std::vector<UncertaintyRecord> rs;
    for (auto [name, h] : std::vector<std::pair<const char*, double>>{
             {"chainsaw", 2.560379}, {"lion", 2.781448}, {"snail", 4.408561}, {"car", 3.306526}, {"dam", 0.043793}}) {
        UncertaintyRecord r;
        r.ground_truth = name;
        r.entropy_bits = h;
        rs.push_back(r);
    }
    std::string order;
    for (const auto& r : rank_by_uncertainty(rs)) order += (order.empty() ? "" : ", ") + r.ground_truth;
    return order == "snail, car, lion, chainsaw, dam" ? pass(order) : fail_with(order);
}

Outcome gradients() {
    auto net = std::make_unique<nn::Network<double>>();
    net->root().add<nn::Conv2d<double>>("conv", 3, 4, 3, 1, 1, true);
    net->root().add<nn::Tanh<double>>("");
    net->root().add<nn::Linear<double>>("fc", 4 * 8 * 8, 3);
    net->seed_parameters(6);
    PreprocessSpec spec;
    spec.resize_short_side = 8;
    spec.center_crop = 8;
    NetworkClassifier<double> model("two_layer", std::move(net), spec, 3);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor<double> x({3, 8, 8});
    for (auto& v : x.storage()) v = n(rng);
    const ClassIndex cls = 1;
    const Tensor<double> g = input_gradient(model, x, cls);
    Tensor<double> fd(x.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor<double> a = x, b = x;
        a[i] += 1e-5;
        b[i] -= 1e-5;
        fd[i] = (model.logits(a)[cls] - model.logits(b)[cls]) / 2e-5;
        if (std::abs(fd[i]) > 1e-6) worst = std::max(worst, std::abs(g[i] - fd[i]) / std::abs(fd[i]));
    }
    if (worst > 1e-3) return fail_with("relative error " + std::to_string(worst));
    const auto vanilla = vanilla_gradient(model, x, cls);
    const auto want = normalize_saliency(pixel_magnitude(fd));
    for (std::size_t i = 0; i < want.size(); ++i)
        if (std::abs(vanilla.values[i] - want[i]) > 1e-3) return fail_with("normalized map differs at " + std::to_string(i));
    if (smoothgrad(model, x, cls, SaliencyParams{1, 0.0, 0}).values != vanilla.values)
        return fail_with("smoothgrad(n=1, sigma=0) differs from vanilla");
    std::ostringstream os;
    os << "max relative error " << worst;
    return pass(os.str());
}

Outcome perturbations() {
    std::mt19937_64 rng(7);
    const Image im = uqtest::random_image(rng, 37, 23);
    if (rotate(im, 0) != im) return fail_with("rotate 0");
    if (gaussian_blur(im, 0.0) != im) return fail_with("blur sigma 0");
    if (rotate(rotate(im, 180), 180) != im) return fail_with("rotate 180 twice");
    const Image g = grayscale(im);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (g.at(x, y, 0) != g.at(x, y, 1) || g.at(x, y, 1) != g.at(x, y, 2)) return fail_with("grayscale channels");
    Image patch(2, 2, 3);
    const int in[4][3] = {{100, 150, 199}, {255, 255, 255}, {0, 0, 0}, {10, 20, 30}};
    // Rows of the sepia matrix applied by hand, then rounded and clamped.
    const double mat[3][3] = {{0.393, 0.769, 0.189}, {0.349, 0.686, 0.168}, {0.272, 0.534, 0.131}};
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) patch.at(i % 2, i / 2, c) = static_cast<std::uint8_t>(in[i][c]);
    const Image s = sepia(patch);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = mat[c][0] * in[i][0] + mat[c][1] * in[i][1] + mat[c][2] * in[i][2];
            const int want = static_cast<int>(std::min(255.0, std::floor(v + 0.5)));
            if (s.at(i % 2, i / 2, c) != want) return fail_with("sepia pixel " + std::to_string(i));
        }
    return pass();
}

std::map<std::string, std::string> outputs(const RunResult& r, const std::filesystem::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& f : r.files) out[f.lexically_relative(root).generic_string()] = uqtest::read_text(f);
    return out;
}

Outcome end_to_end() {
    const auto sample = uqtest::data_dir() / "sample";
    const auto& catalog = uqtest::imagenet();
    const Manifest manifest = load_manifest(sample / "manifest.json", catalog);
    const RunConfig base = load_config(sample / "config.json");
    uqtest::TempDir dir("acceptance");
    auto run = [&](const std::string& out, const std::string& cache, RunStats* stats = nullptr) {
        RunConfig c = base;
        c.output_dir = dir / out;
        c.cache_dir = dir / cache;
        Runner runner(c, catalog);
        const RunResult r = runner.run(manifest);
        if (r.partial()) fail(ErrorKind::io, out + ": " + r.failures.front().image_id + ": " + r.failures.front().message);
        if (stats) *stats = runner.stats();
        return outputs(r, c.output_dir);
    };
    RunStats cold{}, warm{};
    const auto a = run("out_a", "cache_a", &cold);
    const auto b = run("out_b", "cache_b");
    if (a != b) {
        for (const auto& [name, bytes] : a)
            if (!b.count(name) || b.at(name) != bytes) return fail_with("cold runs differ in " + name);
        return fail_with("cold runs wrote different file sets");
    }
    std::size_t reports = 0, grids = 0;
    for (const auto& [name, bytes] : a) {
        if (name.ends_with(".csv")) (name.find('/') == std::string::npos ? reports : grids) += 1;
    }
    const auto c = run("out_c", "cache_a", &warm);
    if (warm.model_invocations != 0) return fail_with("warm rerun invoked models " + std::to_string(warm.model_invocations) + " times");
    if (c != a) return fail_with("warm rerun output differs");
    return pass(std::to_string(reports) + " reports and " + std::to_string(grids) + " grids identical; cold " +
                std::to_string(cold.model_invocations) + " invocations, warm 0");
}

Outcome reference_bands() {
    const char* val = std::getenv("UQBENCH_VAL_MANIFEST");
    if (!val || !*val) return skip("UQBENCH_VAL_MANIFEST not set");
    const auto weights_dir = default_weights_dir();
    for (MemberId id : list_members()) {
        const auto path = WeightsSource{}.path_for(id, weights_dir);
        if (!std::filesystem::exists(path)) return skip("no weights at " + path.string());
    }
    const auto& catalog = uqtest::imagenet();
    const Manifest manifest = load_manifest(val, catalog);
    if (manifest.entries.empty()) return skip("empty validation manifest");
    const std::map<MemberId, double> reference{{MemberId::resnet50, 79.41}, {MemberId::densenet121, 74.98},
                                               {MemberId::vgg16, 74.4},     {MemberId::alexnet, 63.3},
                                               {MemberId::googlenet, 69.778}};
    std::map<MemberId, double> acc;
    std::vector<Image> images;
    for (const auto& e : manifest.entries) images.push_back(load_image(e.path));
    for (MemberId id : list_members()) {
        auto model = load_member(id, WeightsSource{}, weights_dir);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto p = predict(*model, preprocess<float>(images[i], model->input_spec()));
            correct += is_correct(argmax(p), manifest.entries[i].accepted);
        }
        acc[id] = 100.0 * static_cast<double>(correct) / static_cast<double>(images.size());
    }
    std::ostringstream os;
    bool ok = true;
    for (MemberId id : list_members()) {
        const bool in_band = std::abs(acc[id] - reference.at(id)) <= 2.0;
        ok = ok && in_band;
        os << to_string(id) << ' ' << acc[id] << (in_band ? "" : " (outside band)") << "; ";
    }
    const bool ordered = acc[MemberId::resnet50] > acc[MemberId::densenet121] &&
                         acc[MemberId::densenet121] >= acc[MemberId::vgg16] &&
                         acc[MemberId::vgg16] > acc[MemberId::alexnet];
    os << (ordered ? "ordering holds" : "ordering violated") << " on " << images.size() << " images";
    return ok && ordered ? pass(os.str()) : fail_with(os.str());
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc == 3 && std::strcmp(argv[1], "--only") == 0) only = std::atoi(argv[2]);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> checks{
        {"voting failure reproduction", voting},
        {"entropy bounds", entropy_bounds},
        {"ensemble oracle equivalence", ensemble_oracle},
        {"metric oracle equivalence", metric_oracle},
        {"uncertainty ranking", ranking},
        {"gradient correctness", gradients},
        {"perturbation identities", perturbations},
        {"end-to-end determinism", end_to_end},
        {"reference accuracy bands", reference_bands},
    };
    int failures = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        if (only && static_cast<int>(i) + 1 != only) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = checks[i].second();
        } catch (const std::exception& e) {
            o = fail_with(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
        failures += o.verdict == Verdict::fail;
        std::cout << tag << ' ' << (i + 1) << ' ' << checks[i].first;
        if (!o.detail.empty()) std::cout << ": " << o.detail;
        std::cout << " [" << format_fixed(secs).substr(0, format_fixed(secs).size() - 3) << " s]" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
