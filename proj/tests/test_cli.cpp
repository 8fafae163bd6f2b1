#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Workspace {
 public:
  Workspace() {
    dir_ = fs::temp_directory_path() / ("facecap_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }
  const fs::path& dir() const { return dir_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Result run(const std::string& args, const std::string& env = "") const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = env + " \"" FACECAP_BIN "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

 private:
  fs::path dir_;
};

void check_error_line(const Result& r, int code) {
  CHECK(r.code == code);
  const std::regex line("error code=" + std::to_string(code) + " kind=[a-z_]+ msg=\".*\"\n");
  CHECK(std::regex_match(r.err, line));
}

}  // namespace

TEST_CASE("simulate is byte-deterministic per seed") {
  Workspace ws;
  const auto a = ws.run("-q --seed 7 simulate --frames 120 -d " + ws.path("a") + " -p s");
  const auto b = ws.run("-q --seed 7 simulate --frames 120 -d " + ws.path("b") + " -p s");
  const auto c = ws.run("-q --seed 8 simulate --frames 120 -d " + ws.path("c") + " -p s");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);
  for (const char* ext : {".raw.jsonl", ".weights.csv", ".profile.json"}) {
    CHECK(slurp(ws.path("a/s") + ext) == slurp(ws.path("b/s") + ext));
  }
  CHECK(slurp(ws.path("a/s.weights.csv")) != slurp(ws.path("c/s.weights.csv")));
}

TEST_CASE("FACECAP_SEED is overridden by --seed") {
  Workspace ws;
  REQUIRE(ws.run("-q simulate --frames 60 -d " + ws.path("e") + " -p s", "FACECAP_SEED=7").code == 0);
  REQUIRE(ws.run("-q --seed 7 simulate --frames 60 -d " + ws.path("f") + " -p s", "FACECAP_SEED=3").code == 0);
  REQUIRE(ws.run("-q --seed 3 simulate --frames 60 -d " + ws.path("g") + " -p s").code == 0);
  CHECK(slurp(ws.path("e/s.weights.csv")) == slurp(ws.path("f/s.weights.csv")));
  CHECK(slurp(ws.path("e/s.weights.csv")) != slurp(ws.path("g/s.weights.csv")));
  check_error_line(ws.run("-q simulate --frames 60 -d " + ws.path("h"), "FACECAP_SEED=abc"), 2);
}

TEST_CASE("exit codes") {
  Workspace ws;
  check_error_line(ws.run("no-such-command"), 2);
  check_error_line(ws.run("calibrate -i x.jsonl"), 2);
  check_error_line(ws.run("simulate --style dancing -d " + ws.path("x")), 2);
  check_error_line(ws.run("calibrate -i " + ws.path("missing.jsonl") + " --profile " +
                          ws.path("missing.json") + " -o " + ws.path("o.jsonl")),
                   3);
  std::ofstream(ws.path("bad.jsonl")) << "{\"frames\": oops\n";
  std::ofstream(ws.path("bad.json")) << "[1, 2";
  check_error_line(ws.run("calibrate -i " + ws.path("bad.jsonl") + " --profile " + ws.path("bad.json") +
                          " -o " + ws.path("o.jsonl")),
                   4);
  std::ofstream(ws.path("bad.csv")) << "x,y,z\n1,2\n";
  check_error_line(ws.run("mag-calibrate -i " + ws.path("bad.csv")), 4);
  CHECK(ws.run("--help").code == 0);
}

TEST_CASE("mag-calibrate writes offset and scale") {
  Workspace ws;
  std::ofstream csv(ws.path("mag.csv"));
  csv << "x,y,z\n" << "0,0,0\n" << "10,4,-2\n" << "2,8,6\n";
  csv.close();
  const auto r = ws.run("mag-calibrate -i " + ws.path("mag.csv"));
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("offset")[0].get<double>() == doctest::Approx(5.0));
  CHECK(j.at("offset")[1].get<double>() == doctest::Approx(4.0));
  CHECK(j.at("offset")[2].get<double>() == doctest::Approx(2.0));
}

TEST_CASE("offline pipeline: simulate, calibrate, eval, placement-report, train, infer") {
  Workspace ws;
  const std::string d = ws.path("data");
  REQUIRE(ws.run("-q --seed 1 simulate --frames 200 --lead-in 20 -d " + d + " -p a").code == 0);
  REQUIRE(ws.run("-q --seed 2 simulate --frames 200 --lead-in 20 -d " + d + " -p b").code == 0);
  for (const char* n : {"a", "b"}) {
    const std::string base = d + "/" + n;
    REQUIRE(ws.run("-q calibrate -i " + base + ".raw.jsonl --profile " + base + ".profile.json -o " +
                   base + ".calibrated.jsonl")
                .code == 0);
  }

  const auto ev = ws.run("-q eval --pred " + d + "/a.weights.csv --gt " + d + "/a.weights.csv --json " +
                         ws.path("ev.json") + " --csv " + ws.path("ev.csv"));
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(slurp(ws.path("ev.json")));
  CHECK(j.at("pve_mean_mm").get<double>() == 0.0);
  CHECK(j.at("mse").get<double>() == 0.0);

  const auto pl = ws.run("-q placement-report -i " + d + "/a.calibrated.jsonl --json " + ws.path("pl.json"));
  REQUIRE(pl.code == 0);
  CHECK(pl.out.find("zygomaticus") != std::string::npos);
  CHECK(nlohmann::json::parse(slurp(ws.path("pl.json"))).size() == 12);

  const auto tr = ws.run("-q train --data " + d + " -o " + ws.path("m.ckpt") + " --epochs 1 --eval-sequences 1 --loss " +
                         ws.path("loss.csv"));
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(ws.path("m.ckpt")));
  const auto inf = ws.run("-q infer -m " + ws.path("m.ckpt") + " -i " + d + "/b.calibrated.jsonl -o " +
                          ws.path("pred.csv"));
  REQUIRE(inf.code == 0);
  const auto ev2 = ws.run("-q eval --pred " + ws.path("pred.csv") + " --gt " + d + "/b.weights.csv");
  CHECK(ev2.code == 0);

  std::ofstream(ws.path("short.csv")) << slurp(d + "/a.weights.csv").substr(0, 200);
  check_error_line(ws.run("-q eval --pred " + ws.path("short.csv") + " --gt " + d + "/a.weights.csv"), 6);
}

TEST_CASE("loopback replay and ingest") {
  Workspace ws;
  const std::string d = ws.path("loop");
  REQUIRE(ws.run("-q --seed 5 simulate --frames 120 --lead-in 60 -d " + d + " -p s").code == 0);
  const int port = 41000 + static_cast<int>(::getpid() % 2000);
  const std::string ingest = std::string("\"") + FACECAP_BIN + "\" -q ingest --port " + std::to_string(port) +
                             " --idle-ms 1500 --duration-ms 20000 -o " + d + "/got.raw.jsonl --report " + d +
                             "/report.json > " + d + "/ingest.log 2>&1 & echo $! > " + d + "/ingest.pid";
  REQUIRE(std::system(ingest.c_str()) == 0);
  ::usleep(300'000);
  const auto rep = ws.run("-q replay -i " + d + "/s.raw.jsonl --port " + std::to_string(port));
  CHECK(rep.code == 0);
  const std::string wait = "while kill -0 $(cat " + d + "/ingest.pid) 2>/dev/null; do sleep 0.1; done";
  REQUIRE(std::system(wait.c_str()) == 0);
  REQUIRE(fs::exists(d + "/got.raw.jsonl"));
  const auto report = nlohmann::json::parse(slurp(d + "/report.json"));
  CHECK(report.is_object());
  const auto cal = ws.run("-q calibrate -i " + d + "/got.raw.jsonl --profile " + d + "/s.profile.json -o " + d +
                          "/got.cal.jsonl");
  CHECK(cal.code == 0);

  check_error_line(ws.run("-q ingest --port 70000 -o " + d + "/x.jsonl"), 2);
}
