#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "medbt/dsl/dot.hpp"
#include "medbt/flow/convert.hpp"
#include "medbt/flow/equivalence.hpp"
#include "medbt/service/http_api.hpp"
#include "medbt/sim/scenario.hpp"

using namespace medbt;
namespace fs = std::filesystem;

namespace {

BehaviorTree load_tree(const std::string& path)
{
  auto parsed = dsl::parse(sim::read_file(path));
  for (const auto& d : parsed.diagnostics) std::cerr << path << ":" << d.format() << "\n";
  if (!parsed.ok()) throw Error(path + ": does not parse");
  return std::move(*parsed.tree);
}

int cmd_validate(const std::string& path)
{
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    auto r = flow::parse_flowchart(sim::read_file(path));
    for (const auto& d : r.diagnostics) std::cerr << path << ": " << d.format() << "\n";
    if (!r.ok()) return 1;
    std::cout << path << ": ok, " << r.chart->blocks.size() << " blocks, " << r.chart->conditions().size() << " conditions\n";
    return 0;
  }
  auto parsed = dsl::parse(sim::read_file(path));
  for (const auto& d : parsed.diagnostics) std::cerr << path << ":" << d.format() << "\n";
  if (!parsed.ok()) return 1;
  const auto& t = *parsed.tree;
  std::cout << path << ": ok, " << t.nodes.size() << " nodes, " << leaf_count(t) << " leaves";
  if (!is_normalized(t)) std::cout << " (not normalized)";
  if (dsl::serialize(t) != sim::read_file(path)) std::cout << " (not canonical)";
  std::cout << "\n";
  return 0;
}

int cmd_convert(const std::string& path, bool check, const std::string& out)
{
  const auto chart = flow::parse_flowchart_or_throw(sim::read_file(path));
  const auto tree = flow::convert_to_bt(chart);
  const std::string text = dsl::serialize(tree);
  if (out.empty()) std::cout << text;
  else std::ofstream(out, std::ios::binary) << text;
  if (!check) return 0;
  const auto report = flow::check_equivalence(chart, tree);
  for (const auto& r : report.results) {
    if (r.match) continue;
    std::cerr << "mismatch:";
    for (const auto& [k, v] : r.assignment) std::cerr << " " << k << "=" << (v ? "T" : "F");
    std::cerr << "\n";
  }
  std::cerr << report.results.size() - report.mismatches() << "/" << report.results.size() << " assignments match\n";
  return report.all_match() ? 0 : 1;
}

int cmd_run(const std::string& path, const std::string& trace_out, std::size_t trials)
{
  const auto s = sim::load_scenario(path);
  if (trials > 0) {
    const auto est = sim::estimate_success_probability(s.tree, s.bindings, trials, s.seed, s.blackboard, s.events, s.limits);
    std::cout << s.name << ": p(success) = " << est.p_success << " +/- " << est.standard_error() << " over " << est.trials
              << " trials, mean duration " << est.mean_duration << " s\n";
    return 0;
  }
  try {
    const auto r = sim::run(s);
    if (!trace_out.empty()) {
      if (trace_out == "-") r.trace.write_jsonl(std::cout);
      else {
        std::ofstream os(trace_out, std::ios::binary);
        r.trace.write_jsonl(os);
      }
    }
    std::cerr << s.name << ": " << to_string(r.status) << " at t=" << format_duration(Duration{r.end_time.seconds}) << " after " << r.ticks
              << " ticks\n";
    for (const auto& p : r.blocked_on) std::cerr << "  waiting on external leaf " << p.leaf << " (#" << p.node_id << ")\n";
    if (s.expected_status && *s.expected_status != r.status) {
      std::cerr << "  expected " << to_string(*s.expected_status) << "\n";
      return 1;
    }
    return 0;
  } catch (const sim::BudgetExceeded& e) {
    if (trace_out == "-") e.trace.write_jsonl(std::cout);
    std::cerr << s.name << ": " << e.what() << " at t=" << e.time.seconds << "s\n";
    return 2;
  }
}

void print_state(const service::Session& s)
{
  std::cout << "[t=" << format_duration(Duration{s.engine().now().seconds}) << "] ";
  if (s.terminal()) {
    std::cout << "finished: " << to_string(s.status()) << "\n";
  } else if (!s.pending().empty()) {
    const auto p = s.pending().front();
    std::cout << (p.label.empty() ? p.leaf : p.label) << "  [" << p.leaf << "]  (s)uccess / (f)ailure [elapsed]\n";
  } else if (auto w = s.waiting_until()) {
    std::cout << "waiting until t=" << format_duration(Duration{w->seconds}) << "  (a)dvance\n";
  }
}

int cmd_step(const std::string& path, const std::string& blackboard, std::uint64_t seed, bool all)
{
  const BehaviorTree tree = load_tree(path);
  Blackboard bb;
  if (!blackboard.empty()) bb = Blackboard::from_json(nlohmann::json::parse(blackboard));
  auto bindings = service::interactive_bindings(tree, all ? service::Interactive::All : service::Interactive::Queries, {});
  auto s = service::Session::create("repl", tree.metadata.name, tree, bindings, bb, seed);
  print_state(s);
  std::string line;
  while (!s.terminal() && std::cout << "> " << std::flush && std::getline(std::cin, line)) {
    std::istringstream in(line);
    std::string cmd;
    std::string arg;
    in >> cmd >> arg;
    try {
      if (cmd == "q" || cmd == "quit") break;
      if (cmd == "bb") {
        std::cout << s.engine().blackboard().to_json().dump(2) << "\n";
        continue;
      }
      if (cmd == "a" || cmd == "advance") {
        s.advance(arg.empty() ? std::nullopt : std::optional<Timestamp>(Timestamp{} + parse_duration(arg).value_or(Duration{})));
      } else if (cmd == "s" || cmd == "f") {
        if (s.pending().empty()) throw service::Conflict("nothing is waiting for an answer");
        std::optional<Duration> elapsed;
        if (!arg.empty()) {
          elapsed = parse_duration(arg);
          if (!elapsed) throw service::BadRequest("bad duration '" + arg + "'");
        }
        s.submit(s.pending().front().leaf, cmd == "s" ? Status::Success : Status::Failure, elapsed);
      } else if (!cmd.empty()) {
        std::cout << "commands: s [elapsed], f [elapsed], a [time], bb, q\n";
        continue;
      }
    } catch (const Error& e) {
      std::cout << "error: " << e.what() << "\n";
    }
    print_state(s);
  }
  return s.status() == Status::Failure ? 1 : 0;
}

int cmd_render(const std::string& path, const std::string& status_trace)
{
  const BehaviorTree tree = load_tree(path);
  if (status_trace.empty()) {
    std::cout << dsl::export_dot(tree);
    return 0;
  }
  std::ifstream in(status_trace, std::ios::binary);
  if (!in) throw Error("cannot read " + status_trace);
  const auto statuses = ExecutionTrace::read_jsonl(in).latest_statuses();
  std::cout << dsl::export_dot(tree, &statuses);
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(int port, const std::string& data_dir, const std::string& corpus_dir, const std::string& static_dir)
{
  service::ProtocolRegistry protocols(data_dir.empty() ? std::nullopt : std::optional<fs::path>(data_dir));
  if (!corpus_dir.empty()) protocols.load_corpus(corpus_dir);
  service::SessionStore sessions(data_dir.empty() ? std::nullopt : std::optional<fs::path>(data_dir));
  service::HttpApi api(protocols, sessions);
  httplib::Server server;
  api.mount(server);
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) throw Error("static directory not found: " + static_dir);
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  std::cerr << "listening on http://0.0.0.0:" << port << " (" << protocols.list().size() << " protocols, " << sessions.ids().size()
            << " sessions)\n";
  if (!server.listen("0.0.0.0", port)) {
    std::cerr << "cannot listen on port " << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Behavior trees for clinical protocols"};
  app.require_subcommand(1);

  std::string path;
  auto* validate = app.add_subcommand("validate", "Parse and check a .bt or .flow.json file");
  validate->add_option("file", path)->required()->check(CLI::ExistingFile);

  bool check = false;
  std::string out;
  auto* convert = app.add_subcommand("convert", "Convert a flowchart to a behavior tree");
  convert->add_option("file", path)->required()->check(CLI::ExistingFile);
  convert->add_flag("--check", check, "Verify equivalence over all condition assignments");
  convert->add_option("-o,--output", out, "Write the tree here instead of stdout");

  std::string trace;
  std::size_t trials = 0;
  auto* run = app.add_subcommand("run", "Simulate a scenario");
  run->add_option("scenario", path)->required()->check(CLI::ExistingFile);
  run->add_option("--trace", trace, "Write the trace as JSON lines ('-' for stdout)");
  run->add_option("--trials", trials, "Estimate success probability over this many seeded runs");

  std::string blackboard;
  std::uint64_t seed = 0;
  bool all = false;
  auto* step = app.add_subcommand("step", "Step through a tree, answering pending leaves");
  step->add_option("file", path)->required()->check(CLI::ExistingFile);
  step->add_option("--blackboard", blackboard, "Initial blackboard as a JSON object");
  step->add_option("--seed", seed);
  step->add_flag("--all", all, "Ask about actions too, not only queries");

  std::string status;
  auto* render = app.add_subcommand("render", "Graphviz DOT for a tree");
  render->add_option("file", path)->required()->check(CLI::ExistingFile);
  render->add_option("--status", status, "Color nodes by the latest statuses in this trace")->check(CLI::ExistingFile);

  int port = 8080;
  std::string data_dir;
  std::string corpus_dir;
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--port", port)->envname("BT_PORT")->check(CLI::Range(0, 65535));
  serve->add_option("--data-dir", data_dir, "Session logs and uploaded protocols")->envname("BT_DATA_DIR");
  serve->add_option("--corpus-dir", corpus_dir, "Directory with index.json")->envname("BT_CORPUS_DIR");
  serve->add_option("--static-dir", static_dir, "Serve these files at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(path);
    if (*convert) return cmd_convert(path, check, out);
    if (*run) return cmd_run(path, trace, trials);
    if (*step) return cmd_step(path, blackboard, seed, all);
    if (*render) return cmd_render(path, status);
    if (*serve) return cmd_serve(port, data_dir, corpus_dir, static_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
