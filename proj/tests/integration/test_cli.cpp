#include <gtest/gtest.h>

#include <fcntl.h>
#include <spawn.h>
#include <unistd.h>
#include <sys/wait.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bcsimplex/error.hpp"
#include "bcsimplex/wire.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

const std::string cli = BCSIMPLEX_CLI;
const std::string models = BCSIMPLEX_MODELS_DIR;

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream o;
    o << f.rdbuf();
    return o.str();
}

class Scratch {
public:
    Scratch()
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("bcsimplex_cli_") + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    ~Scratch() { fs::remove_all(dir_); }
    Scratch(const Scratch&) = delete;
    Scratch& operator=(const Scratch&) = delete;
    [[nodiscard]] fs::path operator/(const std::string& name) const { return dir_ / name; }

private:
    fs::path dir_;
};

struct Proc {
    pid_t pid = -1;
    fs::path out, err;
};

Proc spawn(std::vector<std::string> args, const fs::path& out, const fs::path& err)
{
    args.insert(args.begin(), cli);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addopen(&fa, 1, out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addopen(&fa, 2, err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    Proc p{-1, out, err};
    const int rc = posix_spawn(&p.pid, cli.c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    if (rc != 0) throw std::runtime_error("posix_spawn failed");
    return p;
}

int wait_for(const Proc& p)
{
    int status = 0;
    waitpid(p.pid, &status, 0);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Result {
    int code = 0;
    std::string out, err;
};

Result run(const Scratch& s, std::vector<std::string> args)
{
    const Proc p = spawn(std::move(args), s / "stdout", s / "stderr");
    Result r;
    r.code = wait_for(p);
    r.out = slurp(p.out);
    r.err = slurp(p.err);
    return r;
}

} // namespace

TEST(Cli, DeriveIsByteIdentical)
{
    const Scratch s;
    ASSERT_EQ(run(s, {"derive", "m1", "--out", (s / "a.json").string()}).code, 0);
    ASSERT_EQ(run(s, {"derive", "m1", "--out", (s / "b.json").string()}).code, 0);
    const std::string a = slurp(s / "a.json");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(s / "b.json"));
    // stdout and file output agree
    EXPECT_EQ(run(s, {"derive", "m1"}).out, a);
}

TEST(Cli, ExperimentIsByteIdentical)
{
    const Scratch s;
    const std::string spec = models + "/experiments/unsafe_ac.json";
    for (const char* d : {"a", "b"}) {
        const Result r = run(s, {"experiment", spec, "--runs", "10", "--seed", "5", "--out", (s / d).string()});
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_NE(r.out.find("violations (shielded) 0"), std::string::npos);
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(s / "a")) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(s / "b" / e.path().filename())) << e.path().filename();
    }
    EXPECT_EQ(files, 21U);
}

TEST(Cli, ExitCodes)
{
    const Scratch s;
    EXPECT_EQ(run(s, {"model"}).code, 0);
    EXPECT_EQ(run(s, {"derive", "nonesuch"}).code, 2);
    EXPECT_EQ(run(s, {"derive", "m1", "--param", "vref"}).code, 2);
    EXPECT_EQ(run(s, {"derive", "m1", "--strategy", "sometimes"}).code, 2);
    EXPECT_EQ(run(s, {"derive", "m1", "--eta", "2.5"}).code, 2);
    EXPECT_EQ(run(s, {"derive"}).code, 2);
    EXPECT_EQ(run(s, {"frobnicate"}).code, 2);
    EXPECT_EQ(run(s, {"simulate", "m1", "--x0", "0.48"}).code, 2);
    EXPECT_EQ(run(s, {"check", "m1"}).code, 0);

    // an unsafe "baseline" under the shield is reported as a violation
    const Result bad = run(s, {"simulate", "m1", "--ac", "constant:0.1", "--bc", "constant:0.1", "--horizon", "1", "--out",
                               (s / "t.csv").string()});
    EXPECT_EQ(bad.code, 3);
    EXPECT_NE(bad.err.find("VIOLATION"), std::string::npos);
    // with the shield off a violation is an expected outcome
    EXPECT_EQ(run(s, {"simulate", "m1", "--ac", "constant:0.1", "--no-shield", "--horizon", "1", "--out", (s / "t.csv").string()}).code, 0);
}

TEST(Cli, ArtifactHashMismatchIsRejected)
{
    const Scratch s;
    ASSERT_EQ(run(s, {"derive", "m1", "--out", (s / "a.json").string()}).code, 0);
    const Result r = run(s, {"simulate", "m1", "--param", "wf=6", "--artifact", (s / "a.json").string(), "--horizon", "0.1"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("hash"), std::string::npos);
}

TEST(Cli, SimulateWritesTheTraceHeader)
{
    const Scratch s;
    const Result r = run(s, {"simulate", "m1", "--ac", "constant:0.1", "--horizon", "0.5", "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "t,v,Q,u,controller,h,alpha,beta,fsc,rsc,event");
    EXPECT_NE(r.out.find(",BC,"), std::string::npos);
    EXPECT_NE(r.out.find("forward"), std::string::npos);
}

TEST(Cli, FalsifyReportsWitnessOrNone)
{
    const Scratch s;
    const Result w = run(s, {"falsify", "m1", "--ac", "constant:0.1", "--budget", "100"});
    EXPECT_EQ(w.code, 0);
    EXPECT_EQ(w.out.rfind("witness", 0), 0U) << w.out;
    const Result none = run(s, {"falsify", "m1", "--ac", "baseline", "--budget", "50", "--horizon", "0.2"});
    EXPECT_EQ(none.out, "NONE\n");
}

TEST(Cli, ServeRunsTheLoopAgainstAWireClient)
{
    const Scratch s;
    const Proc p = spawn({"serve", "scalar", "--order", "1", "--x0", "0.05", "--horizon", "2", "--out", (s / "trace.csv").string()},
                         s / "stdout", s / "stderr");

    int port = 0;
    const std::regex re("listening on port ([0-9]+)");
    for (int i = 0; i < 500 && port == 0; ++i) {
        std::smatch m;
        const std::string err = slurp(s / "stderr");
        if (std::regex_search(err, m, re)) port = std::stoi(m[1]);
        else std::this_thread::sleep_for(10ms);
    }
    ASSERT_NE(port, 0) << slurp(s / "stderr");

    std::size_t states = 0;
    {
        bcsimplex::wire::LineStream c = bcsimplex::wire::connect({"127.0.0.1", port});
        const auto hello = bcsimplex::wire::client_handshake(c, 5s);
        EXPECT_EQ(hello.states, std::vector<std::string>{"x"});
        EXPECT_EQ(hello.inputs, std::vector<std::string>{"u"});
        try {
            while (auto line = c.receive(10s)) {
                const auto st = bcsimplex::wire::decode_state(*line);
                ++states;
                c.send(bcsimplex::wire::encode(bcsimplex::wire::ActionMsg{{1.0}, st.t}));
            }
        } catch (const bcsimplex::TransportError&) {
            // server finished and closed the stream
        }
    }
    EXPECT_EQ(wait_for(p), 0) << slurp(s / "stderr");
    EXPECT_EQ(states, 20U);
    const std::string trace = slurp(s / "trace.csv");
    EXPECT_EQ(trace.substr(0, trace.find('\n')), "t,x,u,controller,h,alpha,beta,fsc,rsc,event");
    EXPECT_NE(trace.find("forward"), std::string::npos);
}
