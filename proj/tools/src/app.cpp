#include "chameleon/cli/app.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "chameleon/checkpoint_io.hpp"
#include "chameleon/cli/episodes.hpp"
#include "chameleon/cli/sequence_io.hpp"
#include "chameleon/cost_model.hpp"
#include "chameleon/oracle.hpp"
#include "chameleon/proto_learn.hpp"
#include "chameleon/scheduler.hpp"

namespace chameleon::cli {

namespace fs = std::filesystem;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> log() {
  auto l = spdlog::get("chameleon-sim");
  if (!l) {
    l = spdlog::stderr_logger_st("chameleon-sim");
    l->set_pattern("[%l] %v");
    l->set_level(spdlog::level::warn);
  }
  return l;
}

void require_file(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw IoError("cannot open '" + p.string() + "'");
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + p.string() + "'");
  log()->info("wrote {}", p.string());
}

net::Checkpoint load(const fs::path& p) {
  require_file(p);
  log()->info("loading checkpoint {}", p.string());
  return net::load_checkpoint(p);
}

void override_overflow(net::Checkpoint& ck, const std::string& overflow) {
  if (overflow.empty()) return;
  const auto m = quant::overflow_mode_from_string(overflow);
  for (auto& c : ck.conv) c.rescale.overflow = m;
  for (auto& f : ck.head) f.rescale.overflow = m;
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += f(v[i]);
  }
  return s;
}

// Keys and values in print order; emitted as "key value" lines or JSON.
class Record {
 public:
  void add(std::string key, std::string value) {
    text_.emplace_back(key, value);
    json_[key] = value;
  }
  void add(std::string key, std::int64_t value) {
    text_.emplace_back(key, std::to_string(value));
    json_[key] = value;
  }
  void add(std::string key, std::uint64_t value) {
    text_.emplace_back(key, std::to_string(value));
    json_[key] = value;
  }
  void add(std::string key, int value) { add(std::move(key), std::int64_t{value}); }
  void add_real(std::string key, double value) {
    text_.emplace_back(key, fixed(value));
    json_[key] = value;
  }
  template <class T>
  void add_list(std::string key, const std::vector<T>& values) {
    text_.emplace_back(key, join(values, [](T v) { return std::to_string(v); }));
    json_[key] = values;
  }
  std::string str(bool as_json) const {
    if (as_json) return json_.dump(2) + "\n";
    std::string s;
    for (const auto& [k, v] : text_) s += k + ' ' + v + '\n';
    return s;
  }

 private:
  std::vector<std::pair<std::string, std::string>> text_;
  nlohmann::ordered_json json_ = nlohmann::ordered_json::object();
};

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string mode = "16x16";
  std::string overflow;
  std::string trace;
  std::string dump_memory;
  std::optional<int> real_input_shift;
  bool json = false;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  auto ck = load(a.checkpoint);
  override_overflow(ck, a.overflow);
  const auto mode = pe::array_mode_from_string(a.mode);
  require_file(a.input);
  SequenceFormat fmt;
  fmt.channels = ck.config.input_channels;
  fmt.input_shift = a.real_input_shift;
  const auto input = read_sequence(a.input, fmt);
  const int n = static_cast<int>(input.size());

  const auto deps = sched::dependency_sets(ck.config, n);
  const auto schedule = sched::greedy_schedule(deps, ck.config);
  const auto fifo = sched::simulate_fifo(schedule, ck.config);
  pe::Engine engine(ck, mode);
  log()->debug("running {} events in {} mode", schedule.events.size(), a.mode);
  const auto res = engine.run(input, schedule);

  if (!a.trace.empty()) write_file(a.trace, sched::trace_text(schedule));
  if (!a.dump_memory.empty()) write_file(a.dump_memory, engine.memory_dump());

  std::vector<int> scores, output;
  for (auto v : res.logits) scores.push_back(v.value());
  for (auto v : res.output) output.push_back(v.value());

  Record r;
  r.add("class", res.predicted);
  r.add_list("scores", scores);
  r.add_list("output", output);
  r.add("mode", pe::to_string(mode));
  r.add("sequence_length", n);
  r.add("cycles", res.cycles);
  r.add("head_cycles", res.head_cycles);
  r.add("scheduled_events", static_cast<std::uint64_t>(schedule.conv_events()));
  r.add("activation_bytes", fifo.activation_bytes);
  r.add("input_buffer_bytes", fifo.input_bytes);
  r.add("weight_addresses", engine.layout().weight_addresses);
  r.add("bias_addresses", engine.layout().bias_addresses);
  r.add("active_bank_cycles", res.active_bank_cycles);
  r.add("gated_bank_reads", res.gated_bank_reads);
  r.add("saturations", res.stats.saturations);
  r.add("overflow_events", res.stats.overflow_events);
  out << r.str(a.json);
  return 0;
}

// ---------------------------------------------------------------- learn

struct LearnArgs {
  std::string checkpoint;
  std::string embeddings;
  std::string sequences;
  std::string mode = "16x16";
  std::string bias_mode = "exact";
  std::string export_classes;
  int dim = 48;
  int ways = 5;
  int shots = 1;
  int queries = 1;
  int episodes = 1;
  int continual = 0;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  double noise = 1.0;
  double margin = 8.0;
  bool pow2_sums = false;
};

struct EpisodeResult {
  int correct = 0;
  int agree = 0;
  int queries = 0;
  std::uint64_t learn_cycles = 0;
  std::uint64_t classify_cycles = 0;
  int shots = 0;
  std::string table;
};

std::vector<std::vector<double>> as_real(const std::vector<Embedding>& shots) {
  std::vector<std::vector<double>> r;
  for (const auto& e : shots) {
    std::vector<double> v;
    for (auto x : e) v.push_back(x.value());
    r.push_back(std::move(v));
  }
  return r;
}

EpisodeResult run_episode(const Episode& ep, int dim, proto::BiasMode bias, const proto::MemoryBudget& budget) {
  proto::Learner learner(dim, bias, budget);
  EpisodeResult r;
  for (std::size_t w = 0; w < ep.support.size(); ++w) {
    r.learn_cycles += learner.learn_class(ep.support_labels[w], ep.support[w]).cycles;
    r.shots += static_cast<int>(ep.support[w].size());
  }
  std::vector<std::vector<std::vector<double>>> support;
  for (const auto& s : ep.support) support.push_back(as_real(s));
  for (std::size_t q = 0; q < ep.queries.size(); ++q) {
    const auto c = learner.classify(ep.queries[q]);
    const int truth = ep.support_labels[static_cast<std::size_t>(ep.query_way[q])];
    std::vector<double> x;
    for (auto v : ep.queries[q]) x.push_back(v.value());
    const int ref = ep.support_labels[static_cast<std::size_t>(oracle::l2_prototype_classify(support, x))];
    r.correct += c.class_id == truth;
    r.agree += c.class_id == ref;
    ++r.queries;
    if (c.class_id != ref)
      log()->debug("query {} classified {} but nearest prototype is {}", q, c.class_id, ref);
  }
  r.classify_cycles = learner.classify_cycles();
  r.table = learner.export_table();
  return r;
}

int cmd_learn(const LearnArgs& a, std::ostream& out) {
  const auto bias = proto::bias_mode_from_string(a.bias_mode);
  proto::MemoryBudget budget;
  std::optional<net::Checkpoint> ck;
  if (!a.checkpoint.empty()) {
    ck = load(a.checkpoint);
    budget = proto::budget_after(ck->config);
  }

  std::optional<EmbeddingPool> pool;
  int dim = a.dim;
  if (!a.embeddings.empty()) {
    require_file(a.embeddings);
    pool = read_embedding_file(a.embeddings);
  } else if (!a.sequences.empty()) {
    if (!ck) throw UsageError("--sequences needs --checkpoint to compute embeddings");
    require_file(a.sequences);
    SequenceFormat fmt;
    fmt.channels = ck->config.input_channels;
    const auto seqs = read_labeled_sequences(a.sequences, fmt);
    pe::Engine engine(*ck, pe::array_mode_from_string(a.mode));
    pool.emplace();
    for (const auto& [label, seq] : seqs) (*pool)[label].push_back(engine.run(seq).output);
    log()->info("embedded {} sequences", seqs.size());
  }
  if (pool) dim = static_cast<int>(pool->begin()->second.front().size());

  ClusterOptions copt;
  copt.dim = dim;
  copt.noise = a.noise;
  copt.margin = a.margin;
  copt.power_of_two_sums = a.pow2_sums;

  auto make_episode = [&](const EpisodeSpec& spec) {
    return pool ? sample_episode(spec, *pool) : synthetic_episode(spec, copt);
  };

  if (a.continual > 0) {
    EpisodeSpec spec{a.continual, a.shots, a.queries, a.seed};
    check(spec);
    const auto ep = make_episode(spec);
    proto::Learner learner(dim, bias, budget);
    std::uint64_t cycles = 0;
    for (std::size_t w = 0; w < ep.support.size(); ++w) cycles += learner.learn_class(ep.support_labels[w], ep.support[w]).cycles;
    int correct = 0;
    for (std::size_t q = 0; q < ep.queries.size(); ++q)
      correct += learner.classify(ep.queries[q]).class_id == ep.support_labels[static_cast<std::size_t>(ep.query_way[q])];
    if (!a.export_classes.empty()) write_file(a.export_classes, learner.export_table());
    Record r;
    r.add("classes", static_cast<std::uint64_t>(learner.num_classes()));
    r.add("embedding_dim", dim);
    r.add("bias_mode", proto::to_string(bias));
    r.add("accuracy", ep.queries.empty() ? std::string("n/a") : fixed(static_cast<double>(correct) / static_cast<double>(ep.queries.size())));
    r.add("learn_cycles", cycles);
    r.add("bytes_per_way", learner.continual_footprint());
    r.add("used_bytes", static_cast<std::int64_t>(learner.num_classes()) * learner.continual_footprint());
    r.add("budget_bytes", budget.bytes());
    r.add("free_bytes", learner.free_bytes());
    out << r.str(false);
    return 0;
  }

  if (a.episodes < 1) throw UsageError("--episodes must be positive");
  std::vector<EpisodeSpec> specs;
  for (int e = 0; e < a.episodes; ++e) {
    EpisodeSpec spec{a.ways, a.shots, a.queries, a.seed + static_cast<std::uint64_t>(e)};
    check(spec);
    specs.push_back(spec);
  }

  std::vector<EpisodeResult> results(specs.size());
  std::vector<std::exception_ptr> errors(specs.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < specs.size(); i += step) {
      try {
        results[i] = run_episode(make_episode(specs[i]), dim, bias, budget);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(a.threads, 1, specs.size());
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool_threads;
    for (std::size_t t = 0; t < threads; ++t) pool_threads.emplace_back(work, t, threads);
    for (auto& t : pool_threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  int correct = 0, agree = 0, queries = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << "episode " << i << " seed " << specs[i].seed << " accuracy "
        << (r.queries ? fixed(static_cast<double>(r.correct) / r.queries) : std::string("n/a")) << " oracle_agreement "
        << (r.queries ? fixed(static_cast<double>(r.agree) / r.queries) : std::string("n/a")) << " learn_cycles "
        << r.learn_cycles << " cycles_per_shot " << fixed(static_cast<double>(r.learn_cycles) / r.shots)
        << " classify_cycles " << r.classify_cycles << '\n';
    correct += r.correct;
    agree += r.agree;
    queries += r.queries;
  }
  if (!a.export_classes.empty()) write_file(a.export_classes, results.back().table);
  Record r;
  r.add("episodes", a.episodes);
  r.add("ways", a.ways);
  r.add("shots", a.shots);
  r.add("embedding_dim", dim);
  r.add("bias_mode", proto::to_string(bias));
  r.add("mean_accuracy", queries ? fixed(static_cast<double>(correct) / queries) : std::string("n/a"));
  r.add("oracle_agreement", queries ? fixed(static_cast<double>(agree) / queries) : std::string("n/a"));
  r.add("bytes_per_way", proto::continual_footprint_bytes(dim));
  out << r.str(false);
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string checkpoint;
  std::string preset;
  std::string input;
  std::string out;
  std::string trace;
  std::string memory_map;
  std::string overflow;
  std::optional<int> n;
  std::uint64_t seed = 0;
  double clock = cost::kDefaultClockHz;
  bool json = false;
  bool skip_modes = false;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  net::Checkpoint ck;
  if (!a.checkpoint.empty()) {
    ck = load(a.checkpoint);
  } else {
    const auto cfg = net::presets::by_name(a.preset);
    if (!cfg) throw UsageError("unknown preset '" + a.preset + "'");
    ck = net::generate_checkpoint(*cfg, a.seed);
  }
  override_overflow(ck, a.overflow);
  int n = a.n.value_or(ck.config.sequence_length);
  pe::Sequence input;
  if (!a.input.empty()) {
    require_file(a.input);
    SequenceFormat fmt;
    fmt.channels = ck.config.input_channels;
    input = read_sequence(a.input, fmt);
    n = static_cast<int>(input.size());
  }
  if (n < 1) throw UsageError("--n must be positive");

  const auto metrics = cost::compare_strategies(ck.config, n, a.clock);
  std::vector<std::pair<std::string, std::string>> fields = cost::fields(metrics);
  if (!a.skip_modes) {
    if (input.empty()) input = random_sequence(n, ck.config.input_channels, a.seed);
    const auto modes = cost::mode_tradeoff(ck, input, a.clock);
    for (auto& f : cost::fields(modes)) fields.push_back(std::move(f));
    for (const auto& m : modes)
      if (!m.fits) log()->warn("{} mode: {}", pe::to_string(m.mode), m.capacity_error);
  }

  if (!a.trace.empty()) {
    const auto deps = sched::dependency_sets(ck.config, n);
    write_file(a.trace, sched::trace_text(sched::greedy_schedule(deps, ck.config)));
  }
  if (!a.memory_map.empty()) write_file(a.memory_map, pe::Engine(ck, pe::ArrayMode::m16x16).memory_dump());

  // Same ordered fields through both encodings.
  std::string text;
  if (a.json) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : fields) {
      char* end = nullptr;
      const double d = std::strtod(v.c_str(), &end);
      if (!v.empty() && end && *end == '\0')
        j[k] = v.find_first_of(".eE") == std::string::npos ? nlohmann::ordered_json(std::stoll(v)) : nlohmann::ordered_json(d);
      else
        j[k] = v;
    }
    text = j.dump(2) + "\n";
  } else {
    for (const auto& [k, v] : fields) text += k + ' ' + v + '\n';
  }
  if (!a.out.empty()) write_file(a.out, text);
  else out << text;
  return 0;
}

// ---------------------------------------------------------------- gen-fixture

struct GenArgs {
  std::string preset = "small";
  std::string shape;
  std::string out;
  std::string format = "binary";
  std::string overflow;
  std::string input_out;
  std::uint64_t seed = 0;
};

// "in,channels,blocks,kernel,n[,head...]"
net::NetworkConfig parse_shape(const std::string& s) {
  std::vector<int> v;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("--shape: '" + tok + "' is not an integer");
    }
  }
  if (v.size() < 5) throw UsageError("--shape needs in,channels,blocks,kernel,n[,head...]");
  net::TcnShape shape;
  shape.input_channels = v[0];
  shape.channels = v[1];
  shape.blocks = v[2];
  shape.kernel_size = v[3];
  shape.sequence_length = v[4];
  shape.head.assign(v.begin() + 5, v.end());
  return net::make_tcn(shape);
}

int cmd_gen_fixture(const GenArgs& a, std::ostream& out) {
  net::NetworkConfig cfg;
  if (!a.shape.empty()) {
    cfg = parse_shape(a.shape);
  } else {
    const auto p = net::presets::by_name(a.preset);
    if (!p) throw UsageError("unknown preset '" + a.preset + "'");
    cfg = *p;
  }
  if (auto v = net::validate(cfg); !v.empty()) throw net::ValidationError(v);
  net::GenerateOptions opt;
  if (!a.overflow.empty()) opt.overflow = quant::overflow_mode_from_string(a.overflow);
  const auto ck = net::generate_checkpoint(cfg, a.seed, opt);
  const auto fmt = a.format == "text" ? net::CheckpointFormat::text : net::CheckpointFormat::binary;
  if (fmt == net::CheckpointFormat::text) write_file(a.out, net::encode_text(ck));
  else {
    const auto bytes = net::encode_binary(ck);
    write_file(a.out, std::string(bytes.begin(), bytes.end()));
  }
  if (!a.input_out.empty())
    write_file(a.input_out, format_sequence(random_sequence(cfg.sequence_length, cfg.input_channels, a.seed)));
  out << "wrote " << a.out << " weights " << net::weight_count(cfg) << " layers " << cfg.num_conv_layers()
      << " head " << cfg.head.size() << '\n';
  return 0;
}

int fail(std::ostream& err, ExitCode code, const std::string& category, std::string msg) {
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  err << kErrorPrefix << category << ": " << msg << '\n';
  return static_cast<int>(code);
}

}  // namespace

void configure_logging() {
  auto l = log();
  const char* env = std::getenv("CHAMELEON_SIM_LOG");
  if (!env || !*env) return;
  const std::string s = env;
  const auto lvl = spdlog::level::from_str(s);
  // from_str maps unknown names to off; only accept "off" when spelled out.
  if (lvl == spdlog::level::off && s != "off") {
    l->warn("unknown CHAMELEON_SIM_LOG value '{}', using warn", s);
    return;
  }
  l->set_level(lvl);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Functional simulator of a dual-mode TCN accelerator with on-chip prototype learning",
               "chameleon-sim"};
  app.require_subcommand(1);
  const std::vector<std::string> modes{"4x4", "16x16"};
  const std::vector<std::string> overflows{"wrap", "clamp"};

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Run one input sequence through a checkpoint");
  infer->add_option("--checkpoint", ia.checkpoint, "Checkpoint file (binary or text)")->required();
  infer->add_option("--input", ia.input, "Input sequence, one timestep per line")->required();
  infer->add_option("--mode", ia.mode, "Array mode")->check(CLI::IsMember(modes));
  infer->add_option("--overflow", ia.overflow, "Override every layer's 4-bit overflow mode")->check(CLI::IsMember(overflows));
  infer->add_option("--real-input-shift", ia.real_input_shift, "Read real-valued input scaled by 2^shift");
  infer->add_option("--trace", ia.trace, "Write the schedule trace here");
  infer->add_option("--dump-memory", ia.dump_memory, "Write the weight/bias memory map here");
  infer->add_flag("--json", ia.json, "JSON output");

  LearnArgs la;
  auto* learn = app.add_subcommand("learn", "Few-shot or continual learning episodes");
  learn->add_option("--checkpoint", la.checkpoint, "Deployed embedder; its parameters reduce the memory budget");
  learn->add_option("--embeddings", la.embeddings, "Embedding file, one '<label> v1..vV' per line");
  learn->add_option("--sequences", la.sequences, "Labeled sequences embedded through --checkpoint");
  learn->add_option("--mode", la.mode, "Array mode used to embed --sequences")->check(CLI::IsMember(modes));
  learn->add_option("--dim", la.dim, "Synthetic embedding dimension")->check(CLI::Range(1, 4096));
  learn->add_option("--ways", la.ways, "Classes per episode")->check(CLI::Range(1, proto::kMaxWays));
  learn->add_option("--shots", la.shots, "Shots per class")->check(CLI::Range(1, proto::kMaxShots));
  learn->add_option("--queries", la.queries, "Queries per class")->check(CLI::Range(0, 100000));
  learn->add_option("--episodes", la.episodes, "Episodes to sample")->check(CLI::Range(1, 1000000));
  learn->add_option("--continual", la.continual, "Learn this many classes into one table")->check(CLI::Range(1, proto::kMaxWays));
  learn->add_option("--bias-mode", la.bias_mode, "Bias shift rule")->check(CLI::IsMember({"exact", "paper-literal"}));
  learn->add_option("--noise", la.noise, "Synthetic cluster spread")->check(CLI::Range(0.0, 100.0));
  learn->add_option("--margin", la.margin, "Minimum distance between synthetic centers")->check(CLI::Range(0.0, 1000.0));
  learn->add_flag("--pow2-sums", la.pow2_sums, "Synthetic shot sums that are exact powers of two");
  learn->add_option("--threads", la.threads, "Episodes run in parallel")->check(CLI::Range(1u, 256u));
  learn->add_option("--seed", la.seed, "Episode seed (episode i uses seed+i)");
  learn->add_option("--export-classes", la.export_classes, "Write the learned class table here");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Memory/compute comparison and mode tradeoff");
  auto* rck = report->add_option("--checkpoint", ra.checkpoint, "Checkpoint file");
  auto* rpre = report->add_option("--preset", ra.preset, "Built-in network")->check(CLI::IsMember(net::presets::names()));
  rck->excludes(rpre);
  report->add_option("--n", ra.n, "Sequence length (default: the config's)");
  report->add_option("--input", ra.input, "Input used for the mode comparison");
  report->add_option("--seed", ra.seed, "Seed for preset parameters and the random input");
  report->add_option("--clock", ra.clock, "Clock in Hz")->check(CLI::PositiveNumber);
  report->add_option("--overflow", ra.overflow, "Override every layer's overflow mode")->check(CLI::IsMember(overflows));
  report->add_option("--out", ra.out, "Write the report here instead of stdout");
  report->add_option("--trace", ra.trace, "Write the schedule trace here");
  report->add_option("--memory-map", ra.memory_map, "Write the 16x16 memory map here");
  report->add_flag("--json", ra.json, "JSON output");
  report->add_flag("--no-modes", ra.skip_modes, "Skip running both array modes");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-fixture", "Write a deterministic pseudo-random checkpoint");
  gen->add_option("--preset", ga.preset, "Built-in network")->check(CLI::IsMember(net::presets::names()));
  gen->add_option("--shape", ga.shape, "in,channels,blocks,kernel,n[,head...]");
  gen->add_option("--seed", ga.seed, "Parameter seed");
  gen->add_option("--out", ga.out, "Output checkpoint")->required();
  gen->add_option("--format", ga.format, "Checkpoint encoding")->check(CLI::IsMember({"binary", "text"}));
  gen->add_option("--overflow", ga.overflow, "Overflow mode of every layer")->check(CLI::IsMember(overflows));
  gen->add_option("--input-out", ga.input_out, "Also write a random input sequence here");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail(err, ExitCode::usage, "usage", e.what());
  }

  try {
    if (*infer) return cmd_infer(ia, out);
    if (*learn) return cmd_learn(la, out);
    if (*report) {
      if (ra.checkpoint.empty() && ra.preset.empty()) throw UsageError("report needs --checkpoint or --preset");
      return cmd_report(ra, out);
    }
    if (*gen) return cmd_gen_fixture(ga, out);
    return fail(err, ExitCode::usage, "usage", "no command");
  } catch (const UsageError& e) {
    return fail(err, ExitCode::usage, "usage", e.what());
  } catch (const IoError& e) {
    return fail(err, ExitCode::io, "io", e.what());
  } catch (const InputError& e) {
    return fail(err, ExitCode::parse, "parse", e.what());
  } catch (const net::ParseError& e) {
    return fail(err, ExitCode::parse, "parse", e.what());
  } catch (const net::ValidationError& e) {
    return fail(err, ExitCode::validation, "validation", e.what());
  } catch (const pe::CapacityError& e) {
    return fail(err, ExitCode::capacity, "capacity", e.what());
  } catch (const proto::CapacityExhausted& e) {
    return fail(err, ExitCode::capacity, "capacity",
                "class index " + std::to_string(e.class_index()) + " reached: " + e.what());
  } catch (const std::invalid_argument& e) {
    return fail(err, ExitCode::validation, "validation", e.what());
  } catch (const std::out_of_range& e) {
    return fail(err, ExitCode::validation, "validation", e.what());
  } catch (const std::exception& e) {
    return fail(err, ExitCode::failure, "internal", e.what());
  }
}

}  // namespace chameleon::cli
