// Black-box tests that spawn the installed command-line tool. The binary path
// arrives through the DFL_TOOL_PATH compile definition.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string tool() { return DFL_TOOL_PATH; }

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  REQUIRE(f.good());
  f << content;
}

// Runs `args` through the shell with cwd `workdir`, capturing both streams.
CmdResult run_cmd(const std::string& args, const fs::path& workdir) {
  static int counter = 0;
  ++counter;
  const fs::path out_file =
      fs::temp_directory_path() / ("dfl_cli_stdout_" + std::to_string(counter));
  const fs::path err_file =
      fs::temp_directory_path() / ("dfl_cli_stderr_" + std::to_string(counter));
  const std::string cmd = "cd '" + workdir.string() + "' && " + args + " >'" +
                          out_file.string() + "' 2>'" + err_file.string() + "'";
  const int rc = std::system(cmd.c_str());

  CmdResult res;
  res.code = rc == -1 ? -1 : WEXITSTATUS(rc);
  res.out = slurp(out_file);
  res.err = slurp(err_file);
  fs::remove(out_file);
  fs::remove(err_file);
  return res;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dfl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Second JSON-shaped line of `eval` output, used for equality checks.
std::string json_line(const std::string& out) {
  const size_t brace = out.find('{');
  REQUIRE(brace != std::string::npos);
  const size_t end = out.find('\n', brace);
  return out.substr(brace, end - brace);
}

const char* kRunConfig =
    "[data]\n"
    "train = train.conll\n"
    "dev = dev.conll\n"
    "test = test.conll\n"
    "out_dir = runs\n"
    "[encoder]\n"
    "num_layers = 1\n"
    "num_heads = 2\n"
    "d_model = 16\n"
    "d_ff = 32\n"
    "dropout = 0.1\n"
    "max_len = 64\n"
    "[train]\n"
    "alpha = 0.1\n"
    "learning_rate = 0.001\n"
    "batch_size = 8\n"
    "epochs = 2\n"
    "seed = 3\n"
    "aux_tasks = ner,pos\n";

void make_pipeline_corpus(const fs::path& dir) {
  CHECK(run_cmd(tool() + " synth --seed 1 --size 60 --out train.conll", dir).code == 0);
  CHECK(run_cmd(tool() + " synth --seed 2 --size 20 --out dev.conll", dir).code == 0);
  CHECK(run_cmd(tool() + " synth --seed 3 --size 20 --out test.conll", dir).code == 0);
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("cli: synth is seed-deterministic") {
  const fs::path dir = fresh_dir("synth");
  const CmdResult a = run_cmd(tool() + " synth --seed 7 --size 40 --out a.conll", dir);
  CHECK(a.code == 0);
  CHECK(a.out.find("wrote 40 sentence(s)") != std::string::npos);
  CHECK(run_cmd(tool() + " synth --seed 7 --size 40 --out b.conll", dir).code == 0);
  CHECK(run_cmd(tool() + " synth --seed 8 --size 40 --out c.conll", dir).code == 0);

  const std::string bytes_a = slurp(dir / "a.conll");
  CHECK(bytes_a == slurp(dir / "b.conll"));
  CHECK(bytes_a != slurp(dir / "c.conll"));
  CHECK(bytes_a.rfind("# synthetic disfluency corpus seed=7 size=40\n", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("cli: prepare routes bracketed files into splits") {
  const fs::path dir = fresh_dir("prepare");
  fs::create_directories(dir / "in");
  spit(dir / "in" / "sw2301.dff",
       "a/dt [ b/nn + b/nn ] c/vb\n"
       "\n"
       "hello/uh world/nn\n");
  spit(dir / "in" / "sw4601.dff", "x/nn\n");
  spit(dir / "in" / "sw4102.dff", "y/nn z/vb\n");
  spit(dir / "in" / "readme.txt", "not a transcript\n");

  const CmdResult res =
      run_cmd(tool() + " prepare --input in --format bracketed --out out", dir);
  CHECK(res.code == 0);
  CHECK(res.out.find("train.conll: 2 sentence(s)") != std::string::npos);
  CHECK(res.out.find("dev.conll: 1 sentence(s)") != std::string::npos);
  CHECK(res.out.find("test.conll: 1 sentence(s)") != std::string::npos);
  CHECK(res.err.find("1 file(s) matched no split pattern") != std::string::npos);

  CHECK(slurp(dir / "out" / "train.conll") ==
        "a\tdt\tO\tF\n"
        "b\tnn\tO\tD\n"
        "b\tnn\tO\tF\n"
        "c\tvb\tO\tF\n"
        "\n"
        "hello\tuh\tO\tF\n"
        "world\tnn\tO\tF\n");
  CHECK(slurp(dir / "out" / "splits.tsv") ==
        "readme.txt\tother\n"
        "sw2301.dff\ttrain\n"
        "sw4102.dff\ttest\n"
        "sw4601.dff\tdev\n");
  fs::remove_all(dir);
}

TEST_CASE("cli: prepare reports bad sentences with file and line, exit 1") {
  const fs::path dir = fresh_dir("prepare_bad");
  fs::create_directories(dir / "in");
  spit(dir / "in" / "sw2302.dff", "xx [ a b ]\n");
  const CmdResult res =
      run_cmd(tool() + " prepare --input in --format bracketed --out out", dir);
  CHECK(res.code == 1);
  CHECK(res.err.find("sw2302.dff") != std::string::npos);
  CHECK(res.err.find(":1:") != std::string::npos);
  CHECK(res.err.find("1 unparseable sentence(s)") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: usage and IO failures exit 2") {
  const fs::path dir = fresh_dir("usage");
  CHECK(run_cmd(tool() + " bogus", dir).code == 2);
  CHECK(run_cmd(tool() + " synth", dir).code == 2);            // missing --out
  CHECK(run_cmd(tool() + " synth --size -5 --out x", dir).code == 2);
  CHECK(run_cmd(tool() + " prepare --input nope --format bracketed --out o", dir).code == 2);
  CHECK(run_cmd(tool() + " prepare --input . --format weird --out o", dir).code == 2);
  CHECK(run_cmd(tool() + " eval --ckpt missing.ckpt --test also_missing", dir).code == 2);
  CHECK(run_cmd(tool() + " train --config no_such.cfg", dir).code == 2);

  const CmdResult help = run_cmd(tool() + " --help", dir);
  CHECK(help.code == 0);
  CHECK(help.out.find("prepare") != std::string::npos);
  CHECK(help.out.find("tag") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: malformed checkpoints and corpora are domain errors, exit 1") {
  const fs::path dir = fresh_dir("domain");
  spit(dir / "garbage.ckpt", "this is not a checkpoint");
  spit(dir / "bad.conll", "only\ttwo\n");
  const CmdResult eval = run_cmd(
      tool() + " eval --ckpt garbage.ckpt --test bad.conll", dir);
  CHECK(eval.code == 1);
  CHECK(eval.err.find("error:") != std::string::npos);
  CHECK(run_cmd(tool() + " tag --ckpt garbage.ckpt --input bad.conll", dir).code == 1);
  CHECK(run_cmd(tool() + " stats --corpus bad.conll", dir).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: stats prints the corpus report") {
  const fs::path dir = fresh_dir("stats");
  spit(dir / "mini.conll",
       "i\tprp\tO\tD\n"
       "go\tvbp\tO\tF\n"
       "\n"
       "a\tdt\tO\tD\n");
  const CmdResult res = run_cmd(tool() + " stats --corpus mini.conll", dir);
  CHECK(res.code == 0);
  CHECK(res.out ==
        "sentences=2\n"
        "tokens=3\n"
        "disfluent_tokens=2\n"
        "disfluency_rate=0.666667\n"
        "comma_prp_fraction=0.500000\n"
        "entity_disfluent_overlap=0\n"
        "pos_histogram\n"
        "pos,fraction\n"
        "dt,0.500000\n"
        "prp,0.500000\n");
  fs::remove_all(dir);
}

TEST_CASE("cli: train, eval and tag round trip on a synthetic corpus") {
  const fs::path dir = fresh_dir("pipeline");
  make_pipeline_corpus(dir);
  spit(dir / "run.cfg", kRunConfig);

  const CmdResult trained = run_cmd(tool() + " train --config run.cfg", dir);
  CHECK(trained.code == 0);
  CHECK(trained.out.find("best dev F1") != std::string::npos);
  REQUIRE(fs::exists(dir / "runs" / "model.ckpt"));
  REQUIRE(fs::exists(dir / "runs" / "epochs.csv"));

  std::istringstream csv(slurp(dir / "runs" / "epochs.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "epoch,train_loss,dev_p,dev_r,dev_f1");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  // Byte-stable retraining under the same seed; a new seed changes the model.
  fs::copy_file(dir / "runs" / "model.ckpt", dir / "first.ckpt");
  CHECK(run_cmd(tool() + " train --config run.cfg", dir).code == 0);
  CHECK(slurp(dir / "first.ckpt") == slurp(dir / "runs" / "model.ckpt"));
  CHECK(run_cmd(tool() + " train --config run.cfg --seed 4", dir).code == 0);
  CHECK(slurp(dir / "first.ckpt") != slurp(dir / "runs" / "model.ckpt"));

  const CmdResult eval =
      run_cmd(tool() + " eval --ckpt first.ckpt --test test.conll", dir);
  CHECK(eval.code == 0);
  CHECK(eval.out.find("precision=") != std::string::npos);
  const std::string scores = json_line(eval.out);
  CHECK(scores.rfind("{\"f1\":", 0) == 0);
  CHECK(scores.find("\"tp\":") != std::string::npos);

  // Dropping the aux heads must not change disfluency predictions.
  const CmdResult stripped =
      run_cmd(tool() + " eval --ckpt first.ckpt --test test.conll --strip-aux", dir);
  CHECK(stripped.code == 0);
  CHECK(json_line(stripped.out) == scores);

  spit(dir / "sample.txt", "um i want a flight\n\nhello\n");
  const CmdResult tagged = run_cmd(tool() + " tag --ckpt first.ckpt --input sample.txt", dir);
  CHECK(tagged.code == 0);
  std::istringstream tag_out(tagged.out);
  std::vector<std::string> tag_lines;
  while (std::getline(tag_out, line)) tag_lines.push_back(line);
  REQUIRE(tag_lines.size() == 2);  // the blank input line is skipped
  std::istringstream first_line(tag_lines[0]);
  std::string chunk;
  int tokens = 0;
  while (first_line >> chunk) {
    ++tokens;
    const size_t slash = chunk.rfind('/');
    REQUIRE(slash != std::string::npos);
    const std::string label = chunk.substr(slash + 1);
    CHECK((label == "F" || label == "D"));
  }
  CHECK(tokens == 5);

  // Threaded decoding changes neither predictions nor ordering.
  const CmdResult threaded =
      run_cmd("DFL_THREADS=3 " + tool() + " tag --ckpt first.ckpt --input sample.txt", dir);
  CHECK(threaded.code == 0);
  CHECK(threaded.out == tagged.out);
  const CmdResult bad_env =
      run_cmd("DFL_THREADS=abc " + tool() + " tag --ckpt first.ckpt --input sample.txt", dir);
  CHECK(bad_env.code == 1);
  CHECK(bad_env.err.find("DFL_THREADS") != std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("cli: sweep and ablate write their reports") {
  const fs::path dir = fresh_dir("grid");
  make_pipeline_corpus(dir);
  std::string cfg = kRunConfig;
  const size_t epochs_at = cfg.find("epochs = 2");
  REQUIRE(epochs_at != std::string::npos);
  cfg.replace(epochs_at, 10, "epochs = 1");
  spit(dir / "run.cfg", cfg);

  const CmdResult swept =
      run_cmd(tool() + " sweep --config run.cfg --alphas 0,0.1 --seed 1", dir);
  CHECK(swept.code == 0);
  CHECK(swept.out.find("best alpha") != std::string::npos);
  std::istringstream sweep_csv(slurp(dir / "runs" / "sweep.csv"));
  std::string line;
  std::getline(sweep_csv, line);
  CHECK(line == "alpha,seed,dev_f1,dev_precision,dev_recall");
  int rows = 0;
  while (std::getline(sweep_csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  const CmdResult ablated = run_cmd(tool() + " ablate --config run.cfg --seed 1", dir);
  CHECK(ablated.code == 0);
  const std::string report = slurp(dir / "runs" / "ablation.csv");
  CHECK(report.rfind("# reference deltas (published Switchboard results, "
                     "transformer encoder): ner=+1.1 pos=+1.6 ner+pos=+1.8 F1 points\n",
                     0) == 0);
  CHECK(report.find("setting,mean_p,mean_r,mean_f1,std_f1,delta_f1_vs_none") !=
        std::string::npos);
  CHECK(report.find("\nnone,") != std::string::npos);
  CHECK(report.find("\nner+pos,") != std::string::npos);
  CHECK(ablated.out.find("wrote") != std::string::npos);
  fs::remove_all(dir);
}

TEST_SUITE_END();
