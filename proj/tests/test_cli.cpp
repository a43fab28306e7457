#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "support.hpp"

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run_cli(const uqtest::TempDir& dir, const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + UQBENCH_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = uqtest::read_text(out);
    o.err = uqtest::read_text(err);
    return o;
}

void write_manifest(const uqtest::TempDir& dir, const std::string& name, const std::string& images) {
    uqtest::write_text(dir / name, R"({"version": "1", "images": [)" + images + "]}");
}

std::string dam_entry() {
    const auto path = (uqtest::data_dir() / "sample" / "images" / "dam.png").string();
    return R"({"id": "dam", "path": ")" + path + R"(", "ground_truth": "dam"})";
}

std::string common(const uqtest::TempDir& dir) {
    return "--members alexnet --weights seeded:3 --samples 1 --out \"" + (dir / "out").string() + "\" --cache-dir \"" +
           (dir / "cache").string() + "\"";
}

} // namespace

TEST(Cli, SuccessAndWarmRerun) {
    uqtest::TempDir dir("cli_ok");
    write_manifest(dir, "m.json", dam_entry());
    const auto first = run_cli(dir, "classify --manifest \"" + (dir / "m.json").string() + "\" " + common(dir));
    ASSERT_EQ(first.code, 0) << first.err;
    EXPECT_NE(first.out.find("exp1_votes.csv"), std::string::npos);
    EXPECT_NE(first.out.find("model invocations: 1,"), std::string::npos) << first.out;
    const auto second = run_cli(dir, "classify --manifest \"" + (dir / "m.json").string() + "\" " + common(dir));
    ASSERT_EQ(second.code, 0);
    EXPECT_NE(second.out.find("model invocations: 0, cache hits: 1, cache misses: 0"), std::string::npos)
        << second.out;

    const auto md = run_cli(dir, "report --input \"" + (dir / "out" / "exp1_accuracy.csv").string() + "\" --format md");
    ASSERT_EQ(md.code, 0);
    EXPECT_EQ(md.out.rfind("| Model | Correct | Evaluated |", 0), 0u) << md.out;
}

TEST(Cli, PartialFailureExitsOne) {
    uqtest::TempDir dir("cli_partial");
    write_manifest(dir, "m.json",
                   dam_entry() + R"(, {"id": "ghost", "path": "ghost.png", "ground_truth": "lion"})");
    const auto o = run_cli(dir, "classify --manifest \"" + (dir / "m.json").string() + "\" " + common(dir));
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.err.find("ghost"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "exp1_votes.csv"));
}

TEST(Cli, InvalidInputExitsTwo) {
    uqtest::TempDir dir("cli_invalid");
    write_manifest(dir, "ok.json", dam_entry());
    write_manifest(dir, "bad.json", R"({"id": "x", "path": "x.png", "ground_truth": "flying-toaster"})");
    const std::string ok = "--manifest \"" + (dir / "ok.json").string() + "\" ";
    EXPECT_EQ(run_cli(dir, "classify --manifest \"" + (dir / "bad.json").string() + "\" " + common(dir)).code, 2);
    EXPECT_EQ(run_cli(dir, "classify " + common(dir)).code, 2);
    EXPECT_EQ(run_cli(dir, "classify " + ok + "--bogus").code, 2);
    EXPECT_EQ(run_cli(dir, "classify " + ok + "--members inception_v3").code, 2);
    EXPECT_EQ(run_cli(dir, "classify " + ok + "--format xml").code, 2);
    EXPECT_EQ(run_cli(dir, "saliency " + ok + common(dir) + " --target flying-toaster").code, 2);
    EXPECT_EQ(run_cli(dir, "").code, 2);
    EXPECT_EQ(run_cli(dir, "classify --manifest \"" + (dir / "absent.json").string() + "\"").code, 2);
}
