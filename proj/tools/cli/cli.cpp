#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <list>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "semalign/align/semantic_store.hpp"
#include "semalign/backbone/checkpoint.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/hashing.hpp"
#include "semalign/corpus/interactions.hpp"
#include "semalign/corpus/split.hpp"
#include "semalign/eval/metrics.hpp"
#include "semalign/optim/trainer.hpp"
#include "semalign/profilegen/pipeline.hpp"
#include "semalign/profilegen/prompts.hpp"
#include "semalign/synth/synth.hpp"

#ifndef SEMALIGN_VERSION
#define SEMALIGN_VERSION "unknown"
#endif
#ifndef SEMALIGN_TEMPLATE_DIR
#define SEMALIGN_TEMPLATE_DIR "share/templates"
#endif
#ifndef SEMALIGN_INSTALLED_TEMPLATE_DIR
#define SEMALIGN_INSTALLED_TEMPLATE_DIR "/usr/local/share/semalign/templates"
#endif

namespace semalign::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layered settings of one subcommand: built-in defaults, then a JSON config
// file, then flags given on the command line.
class Settings {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& flag, const std::string& key, T fallback,
                      const std::string& help) {
    defaults_[key] = fallback;
    return app->add_option_function<T>(
        flag, [this, key](const T& v) { flags_[key] = v; }, help + " [" + Json(fallback).dump() + "]");
  }

  template <class T>
  CLI::Option* optional(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    defaults_[key] = nullptr;
    return app->add_option_function<T>(flag, [this, key](const T& v) { flags_[key] = v; }, help);
  }

  CLI::Option* toggle(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    defaults_[key] = false;
    return app->add_flag_function(flag, [this, key](std::int64_t n) { flags_[key] = n > 0; }, help);
  }

  void config_option(CLI::App* app) {
    app->add_option("--config", config_path_, "JSON config file; flags take precedence over it");
  }

  Json resolve() {
    Json merged = defaults_;
    explicit_.clear();
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw UsageError("cannot open config file " + config_path_);
      Json file;
      try {
        file = Json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw UsageError("config file " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw UsageError("config file " + config_path_ + " must hold a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (!merged.contains(key)) throw UsageError("config file " + config_path_ + ": unknown key '" + key + "'");
        merged[key] = value;
        explicit_.push_back(key);
      }
    }
    for (const auto& [key, value] : flags_.items()) {
      merged[key] = value;
      explicit_.push_back(key);
    }
    return merged;
  }

  bool is_explicit(const std::string& key) const {
    return std::find(explicit_.begin(), explicit_.end(), key) != explicit_.end();
  }

 private:
  Json defaults_ = Json::object();
  Json flags_ = Json::object();
  std::string config_path_;
  std::vector<std::string> explicit_;
};

template <class T>
T value(const Json& c, const std::string& key) {
  try {
    return c.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError("setting '" + key + "' is missing or has the wrong type (got " + c.value(key, Json()).dump() +
                     ")");
  }
}

std::optional<fs::path> optional_path(const Json& c, const std::string& key) {
  if (!c.contains(key) || c.at(key).is_null()) return std::nullopt;
  return fs::path(value<std::string>(c, key));
}

fs::path required_path(const Json& c, const std::string& key) {
  auto p = optional_path(c, key);
  if (!p) throw UsageError("--" + std::string(key == "init_from" ? "init-from" : key) + " is required");
  return *p;
}

std::vector<fs::path> split_files(const fs::path& dir) {
  return {dir / "train.tsv", dir / "validation.tsv", dir / "test.tsv", dir / "id_map.json"};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string utc_now() {
  const auto now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Written before any long computation so that every run can be reproduced.
void write_manifest(const fs::path& dir, const std::string& command, const Json& config,
                    const std::vector<fs::path>& inputs, const Json& outputs) {
  Json hashes = Json::object();
  for (const auto& p : inputs) {
    if (!fs::is_regular_file(p)) throw DataError("missing input file " + p.string());
    hashes[p.string()] = sha256_file(p);
  }
  const Json manifest{{"command", command},
                      {"version", SEMALIGN_VERSION},
                      {"seed", config.contains("seed") ? config.at("seed") : Json(nullptr)},
                      {"config", config},
                      {"inputs", hashes},
                      {"outputs", outputs}};
  fs::create_directories(dir);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- prepare

void add_prepare(CLI::App* app, Settings& s) {
  s.optional<std::string>(app, "--input", "input", "Interaction file (.tsv or .jsonl)");
  s.option<std::string>(app, "--format", "format", "auto", "Input format: auto, tsv or jsonl")
      ->check(CLI::IsMember({"auto", "tsv", "jsonl"}));
  s.optional<double>(app, "--min-rating", "min_rating", "Drop interactions rated below this");
  s.option<int>(app, "--kcore", "kcore", 5, "k-core threshold; 0 disables filtering");
  s.option<std::vector<unsigned>>(app, "--ratios", "ratios", {3, 1, 1}, "train validation test ratio")
      ->expected(3)
      ->delimiter(',');
  s.option<std::uint64_t>(app, "--seed", "seed", 0, "Split seed");
}

int run_prepare(const Json& c, const fs::path& out_dir, std::ostream& out) {
  const auto input = required_path(c, "input");
  const auto fmt_name = value<std::string>(c, "format");
  const auto format = fmt_name == "auto" ? format_from_path(input)
                      : fmt_name == "tsv" ? InteractionFormat::tsv
                                          : InteractionFormat::jsonl;
  const auto ratios = value<std::vector<unsigned>>(c, "ratios");
  if (ratios.size() != 3 || ratios[0] + ratios[1] + ratios[2] == 0) throw UsageError("--ratios needs three values");
  const auto kcore = value<int>(c, "kcore");
  if (kcore < 0) throw UsageError("--kcore must be non-negative");

  write_manifest(out_dir, "prepare", c, {input},
                 {{"train", (out_dir / "train.tsv").string()},
                  {"validation", (out_dir / "validation.tsv").string()},
                  {"test", (out_dir / "test.tsv").string()},
                  {"id_map", (out_dir / "id_map.json").string()}});
  const auto min_rating = c.at("min_rating").is_null() ? std::nullopt : std::optional(value<double>(c, "min_rating"));
  auto set = load_interactions(input, format, min_rating);
  const auto loaded = set.edges.size();
  if (kcore > 0) set = kcore_filter(set, kcore);
  const auto split = split_interactions(set, {ratios[0], ratios[1], ratios[2]}, value<std::uint64_t>(c, "seed"));
  write_split(out_dir, split);
  out << "loaded " << loaded << " interactions; kept " << set.edges.size() << " over " << set.users.size()
      << " users and " << set.items.size() << " items\n"
      << "split: " << split.train.edges.size() << " train, " << split.validation.edges.size() << " validation, "
      << split.test.edges.size() << " test\n";
  return kSuccess;
}

// ---------------------------------------------------------------- synth

void add_synth(CLI::App* app, Settings& s) {
  const SynthConfig d;
  s.option<std::size_t>(app, "--users", "users", d.num_users, "Number of users");
  s.option<std::size_t>(app, "--items", "items", d.num_items, "Number of items");
  s.option<std::size_t>(app, "--latent-dim", "latent_dim", d.latent_dim, "Planted latent dimension");
  s.option<double>(app, "--density", "density", d.density, "Target interaction density");
  s.option<std::size_t>(app, "--semantic-dim", "semantic_dim", d.semantic_dim, "Semantic vector dimension");
  s.option<double>(app, "--noise", "semantic_noise", d.semantic_noise, "Semantic noise level");
  s.option<double>(app, "--signal", "signal", d.signal, "Logit scale of the planted model");
  s.option<std::uint64_t>(app, "--seed", "seed", d.seed, "Generator and split seed");
  s.toggle(app, "--second-era", "second_era", "Also draw an independent second interaction era into era2/");
}

int run_synth(const Json& c, const fs::path& out_dir, std::ostream& out) {
  SynthConfig cfg;
  cfg.num_users = value<std::size_t>(c, "users");
  cfg.num_items = value<std::size_t>(c, "items");
  cfg.latent_dim = value<std::size_t>(c, "latent_dim");
  cfg.density = value<double>(c, "density");
  cfg.semantic_dim = value<std::size_t>(c, "semantic_dim");
  cfg.semantic_noise = value<double>(c, "semantic_noise");
  cfg.signal = value<double>(c, "signal");
  cfg.seed = value<std::uint64_t>(c, "seed");
  try {
    cfg.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  const bool second = value<bool>(c, "second_era");
  Json outputs{{"interactions", (out_dir / "interactions.tsv").string()},
               {"semantic", (out_dir / "semantic.jsonl").string()},
               {"split", out_dir.string()}};
  if (second) outputs["era2"] = (out_dir / "era2").string();
  write_manifest(out_dir, "synth", c, {}, outputs);

  const auto data = generate(cfg);
  write_interactions_tsv(out_dir / "interactions.tsv", data.interactions);
  write_semantic_jsonl(out_dir / "semantic.jsonl", data.semantic);
  const auto split = split_interactions(data.interactions, {}, cfg.seed);
  write_split(out_dir, split);
  out << "generated " << data.interactions.edges.size() << " interactions over " << data.interactions.users.size()
      << " users and " << data.interactions.items.size() << " items (bias " << data.latents.bias << ")\n";
  if (second) {
    const auto era2 = sample_interactions(data.latents, derive_seed(cfg.seed, "era2"));
    fs::create_directories(out_dir / "era2");
    write_interactions_tsv(out_dir / "era2" / "interactions.tsv", era2);
    write_split(out_dir / "era2", split_interactions(era2, {}, cfg.seed));
    out << "second era: " << era2.edges.size() << " interactions\n";
  }
  return kSuccess;
}

// ---------------------------------------------------------------- service settings

void add_service_options(CLI::App* app, Settings& s) {
  const ClientConfig d;
  s.optional<std::string>(app, "--base-url", "base_url", "Service base URL [$OPENAI_BASE_URL or " + d.base_url + "]");
  s.option<int>(app, "--throttle-retries", "throttle_retries", d.throttle_retries,
                "Retries after 429/5xx responses");
  s.option<int>(app, "--backoff-ms", "backoff_ms", static_cast<int>(d.backoff_initial.count()),
                "Initial backoff delay in milliseconds");
  s.option<int>(app, "--timeout", "timeout_s", static_cast<int>(d.timeout.count()), "Request timeout in seconds");
  s.optional<std::string>(app, "--cache", "cache", "Directory caching profiles and embeddings");
}

ClientConfig client_config(const Json& c) {
  ClientConfig cfg;
  cfg.apply_environment();  // the API key is only ever read from the environment
  if (auto url = optional_path(c, "base_url")) cfg.base_url = url->string();
  cfg.throttle_retries = value<int>(c, "throttle_retries");
  cfg.backoff_initial = std::chrono::milliseconds(value<int>(c, "backoff_ms"));
  cfg.timeout = std::chrono::seconds(value<int>(c, "timeout_s"));
  if (cfg.throttle_retries < 0 || cfg.backoff_initial.count() < 0 || cfg.timeout.count() <= 0) {
    throw UsageError("retry, backoff and timeout settings must be non-negative");
  }
  return cfg;
}

// ---------------------------------------------------------------- gen-profiles

void add_gen_profiles(CLI::App* app, Settings& s) {
  const PromptOptions p;
  const ClientConfig d;
  s.optional<std::string>(app, "--data", "data", "Prepared split directory");
  s.optional<std::string>(app, "--items", "items", "Item text JSONL");
  s.optional<std::string>(app, "--templates", "templates", "Prompt template directory");
  s.option<std::string>(app, "--template-version", "template_version", "v1", "Prompt template version");
  s.option<std::string>(app, "--item-noun", "item_noun", p.item_noun, "Noun used for items in prompts");
  s.option<std::size_t>(app, "--max-reviews", "max_reviews", p.max_reviews, "Reviews sampled per item prompt");
  s.option<std::size_t>(app, "--max-items", "max_items", p.max_items, "Items sampled per user prompt");
  s.option<std::size_t>(app, "--char-budget", "char_budget", p.char_budget, "Prompt size limit in characters");
  s.option<std::string>(app, "--chat-model", "chat_model", d.chat_model, "Chat model name");
  s.option<int>(app, "--retry-limit", "retry_limit", d.retry_limit, "Retries after an unparseable reply");
  s.option<std::size_t>(app, "--concurrency", "concurrency", d.concurrency, "Requests in flight");
  s.option<std::uint64_t>(app, "--seed", "seed", 0, "Sampling seed");
  s.toggle(app, "--dump-prompts", "dump_prompts", "Write every prompt to prompts.jsonl");
  add_service_options(app, s);
}

fs::path template_dir(const Json& c) {
  if (auto dir = optional_path(c, "templates")) return *dir;
  if (const char* env = std::getenv("SEMALIGN_TEMPLATES"); env && *env) return env;
  if (fs::is_directory(SEMALIGN_TEMPLATE_DIR)) return SEMALIGN_TEMPLATE_DIR;
  return SEMALIGN_INSTALLED_TEMPLATE_DIR;
}

void append_prompts(std::ostream& out, const std::vector<ProfileJob>& jobs) {
  for (const auto& job : jobs) {
    out << Json{{"id", job.id}, {"kind", to_string(job.kind)}, {"system", job.prompt.system},
                {"user", job.prompt.user}}
               .dump()
        << '\n';
  }
}

int run_gen_profiles(const Json& c, const fs::path& out_dir, std::ostream& out) {
  const auto data_dir = required_path(c, "data");
  const auto items_path = required_path(c, "items");
  const auto tdir = template_dir(c);
  const auto version = value<std::string>(c, "template_version");
  PromptOptions options;
  options.item_noun = value<std::string>(c, "item_noun");
  options.max_reviews = value<std::size_t>(c, "max_reviews");
  options.max_items = value<std::size_t>(c, "max_items");
  options.char_budget = value<std::size_t>(c, "char_budget");
  auto cfg = client_config(c);
  cfg.chat_model = value<std::string>(c, "chat_model");
  cfg.retry_limit = value<int>(c, "retry_limit");
  cfg.concurrency = value<std::size_t>(c, "concurrency");
  if (cfg.retry_limit < 0 || cfg.concurrency == 0) throw UsageError("retry limit and concurrency must be positive");
  const auto seed = value<std::uint64_t>(c, "seed");
  const bool dump = value<bool>(c, "dump_prompts");

  auto inputs = split_files(data_dir);
  inputs.push_back(items_path);
  inputs.push_back(tdir / ("item_system." + version + ".txt"));
  inputs.push_back(tdir / ("user_system." + version + ".txt"));
  Json outputs{{"profiles", (out_dir / "profiles.jsonl").string()}, {"report", (out_dir / "report.json").string()}};
  if (dump) outputs["prompts"] = (out_dir / "prompts.jsonl").string();
  write_manifest(out_dir, "gen-profiles", c, inputs, outputs);

  const auto split = read_split(data_dir);
  const auto all_texts = read_item_texts(items_path);
  std::map<std::string, const ItemText*> by_id;
  for (const auto& t : all_texts) by_id.emplace(t.id, &t);
  std::vector<ItemText> texts;
  for (const auto& raw : split.train.items.raws()) {
    const auto it = by_id.find(raw);
    if (it == by_id.end()) throw DataError(items_path.string() + ": no text for item '" + raw + "'");
    texts.push_back(*it->second);
  }
  const auto templates = PromptTemplates::load(tdir, version);
  HttpTransport transport(cfg);
  std::optional<ServiceCache> cache;
  if (auto dir = optional_path(c, "cache")) cache.emplace(*dir);
  ServiceCache* cache_ptr = cache ? &*cache : nullptr;

  // Items first: user prompts embed the item profiles.
  const auto ijobs = item_jobs(texts, templates, options, seed);
  auto items = generate_profiles(ijobs, cfg, transport, cache_ptr);
  std::map<std::string, std::string> item_profiles;
  for (const auto& p : items.profiles) item_profiles.emplace(p.id, p.profile);
  const auto ujobs = user_jobs(build_user_histories(split.train, texts), item_profiles, templates, options, seed);
  auto users = generate_profiles(ujobs, cfg, transport, cache_ptr);

  auto profiles = std::move(items.profiles);
  profiles.insert(profiles.end(), users.profiles.begin(), users.profiles.end());
  write_profiles_jsonl(out_dir / "profiles.jsonl", profiles);
  auto report = std::move(items.report);
  report.append(users.report);
  write_text(out_dir / "report.json", report.to_json() + "\n");
  if (dump) {
    std::ofstream prompts(out_dir / "prompts.jsonl", std::ios::binary);
    append_prompts(prompts, ijobs);
    append_prompts(prompts, ujobs);
  }
  out << profiles.size() << " profiles: " << report.count(EntityStatus::succeeded) << " generated, "
      << report.count(EntityStatus::cached) << " cached, " << report.count(EntityStatus::failed)
      << " failed (fallback text used)\n";
  return kSuccess;
}

// ---------------------------------------------------------------- embed

void add_embed(CLI::App* app, Settings& s) {
  const ClientConfig d;
  s.optional<std::string>(app, "--profiles", "profiles", "Profile JSONL");
  s.optional<std::string>(app, "--data", "data", "Prepared split directory; selects the entities to embed");
  s.option<std::string>(app, "--embedding-model", "embedding_model", d.embedding_model, "Embedding model name");
  s.option<std::size_t>(app, "--batch-size", "batch_size", d.embed_batch_size, "Texts per embeddings request");
  add_service_options(app, s);
}

int run_embed(const Json& c, const fs::path& out_dir, std::ostream& out) {
  const auto profiles_path = required_path(c, "profiles");
  const auto data_dir = optional_path(c, "data");
  auto cfg = client_config(c);
  cfg.embedding_model = value<std::string>(c, "embedding_model");
  cfg.embed_batch_size = value<std::size_t>(c, "batch_size");
  if (cfg.embed_batch_size == 0) throw UsageError("--batch-size must be positive");

  std::vector<fs::path> inputs{profiles_path};
  if (data_dir) {
    const auto files = split_files(*data_dir);
    inputs.insert(inputs.end(), files.begin(), files.end());
  }
  write_manifest(out_dir, "embed", c, inputs, {{"semantic", (out_dir / "semantic.jsonl").string()}});

  const auto profiles = read_profiles_jsonl(profiles_path);
  IdMap users;
  IdMap items;
  if (data_dir) {
    const auto split = read_split(*data_dir);
    users = split.train.users;
    items = split.train.items;
  } else {
    for (const auto& p : profiles) (p.kind == EntityKind::user ? users : items).intern(p.id);
  }
  HttpTransport transport(cfg);
  std::optional<ServiceCache> cache;
  if (auto dir = optional_path(c, "cache")) cache.emplace(*dir);
  EmbedStats stats;
  auto store = embed_profiles(profiles, users, items, cfg, transport, cache ? &*cache : nullptr, &stats);
  store.provenance.generated_at = utc_now();
  write_semantic_jsonl(out_dir / "semantic.jsonl", store);
  out << "embedded " << users.size() << " users and " << items.size() << " items (dimension " << store.dim()
      << ", " << stats.requests << " requests, " << stats.cached << " cached)\n";
  return kSuccess;
}

// ---------------------------------------------------------------- train

void add_train(CLI::App* app, Settings& s) {
  const TrainConfig d;
  s.optional<std::string>(app, "--data", "data", "Prepared split directory");
  s.optional<std::string>(app, "--semantic", "semantic", "Semantic JSONL (required for con and gen)");
  s.option<std::string>(app, "--mode", "mode", std::string(to_string(d.mode)), "base, con or gen")
      ->check(CLI::IsMember({"base", "con", "gen"}));
  s.option<std::string>(app, "--backbone", "backbone", std::string(to_string(d.backbone.kind)), "lightgcn or gccf")
      ->check(CLI::IsMember({"lightgcn", "gccf"}));
  s.option<int>(app, "--layers", "layers", d.backbone.layers, "Propagation layers");
  s.option<double>(app, "--l2", "l2_weight", d.backbone.l2_weight, "L2 regularization weight");
  s.option<std::size_t>(app, "--dim", "dim", d.dim, "Embedding dimension");
  s.option<double>(app, "--init-std", "init_std", d.init_std, "Embedding init standard deviation");
  s.option<double>(app, "--lr", "lr", d.adam.lr, "Adam learning rate");
  s.option<double>(app, "--beta1", "beta1", d.adam.beta1, "Adam beta1");
  s.option<double>(app, "--beta2", "beta2", d.adam.beta2, "Adam beta2");
  s.option<double>(app, "--eps", "eps", d.adam.eps, "Adam epsilon");
  s.option<std::size_t>(app, "--batch-size", "batch_size", d.batch_size, "Triples per batch");
  s.option<int>(app, "--max-epochs", "max_epochs", d.max_epochs, "Epoch limit");
  s.option<int>(app, "--patience", "patience", d.patience, "Validation rounds without improvement before stopping");
  s.option<int>(app, "--eval-every", "eval_every", d.eval_every, "Epochs between validation rounds");
  s.option<double>(app, "--lambda", "lambda", d.lambda, "Weight of the alignment loss");
  s.option<double>(app, "--tau", "tau", d.tau, "InfoNCE temperature");
  s.option<double>(app, "--mask-ratio", "mask_ratio", d.mask_ratio, "Fraction of entities masked (gen)");
  s.option<std::uint64_t>(app, "--seed", "seed", d.seed, "Training seed");
  s.toggle(app, "--shuffle-semantic", "shuffle_semantic", "Permute semantic vectors among users / items");
  s.option<double>(app, "--noise-ratio", "noise_ratio", 0.0, "Fraction of fake training edges to inject");
  s.optional<std::string>(app, "--init-from", "init_from", "Checkpoint to initialize embeddings from");
}

TrainConfig train_config(const Json& c) {
  TrainConfig t;
  try {
    t.mode = mode_from_string(value<std::string>(c, "mode"));
    t.backbone.kind = backbone_from_string(value<std::string>(c, "backbone"));
    t.backbone.layers = value<int>(c, "layers");
    t.backbone.l2_weight = value<double>(c, "l2_weight");
    t.dim = value<std::size_t>(c, "dim");
    t.init_std = value<double>(c, "init_std");
    t.adam.lr = value<double>(c, "lr");
    t.adam.beta1 = value<double>(c, "beta1");
    t.adam.beta2 = value<double>(c, "beta2");
    t.adam.eps = value<double>(c, "eps");
    t.batch_size = value<std::size_t>(c, "batch_size");
    t.max_epochs = value<int>(c, "max_epochs");
    t.patience = value<int>(c, "patience");
    t.eval_every = value<int>(c, "eval_every");
    t.lambda = value<double>(c, "lambda");
    t.tau = value<double>(c, "tau");
    t.mask_ratio = value<double>(c, "mask_ratio");
    t.seed = value<std::uint64_t>(c, "seed");
    t.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return t;
}

int run_train(const Json& c, const fs::path& out_dir, std::ostream& out) {
  const auto cfg = train_config(c);
  const auto data_dir = required_path(c, "data");
  const auto semantic_path = optional_path(c, "semantic");
  const auto init_from = optional_path(c, "init_from");
  const auto noise = value<double>(c, "noise_ratio");
  const bool shuffle = value<bool>(c, "shuffle_semantic");
  if (!(noise >= 0.0 && noise <= 1.0)) throw UsageError("--noise-ratio must lie in [0, 1]");
  if (cfg.mode != TrainMode::base && !semantic_path) throw UsageError("--semantic is required for con and gen");

  auto inputs = split_files(data_dir);
  if (semantic_path) inputs.push_back(*semantic_path);
  if (init_from) inputs.push_back(*init_from);
  const auto ckpt = out_dir / "checkpoint.bin";
  write_manifest(out_dir, "train", c, inputs,
                 {{"train_log", (out_dir / "train_log.jsonl").string()},
                  {"metrics", (out_dir / "metrics.json").string()},
                  {"checkpoint", ckpt.string()},
                  {"checkpoint_ids", checkpoint_sidecar(ckpt).string()}});

  auto split = read_split(data_dir);
  if (noise > 0.0) split.train = inject_noise(split, noise, cfg.seed);
  std::optional<SemanticStore> semantic;
  if (cfg.mode != TrainMode::base) {
    semantic = align_store(read_semantic_jsonl(*semantic_path), split.train.users, split.train.items);
    if (shuffle) semantic = shuffle_store(*semantic, cfg.seed);
  }
  std::optional<EmbeddingTable> init;
  if (init_from) {
    init = init_from_checkpoint(*init_from, split.train.users, split.train.items, cfg.dim, cfg.init_std, cfg.seed);
  }

  Trainer trainer(split, semantic ? &*semantic : nullptr, cfg, std::move(init));
  const auto result = trainer.fit();
  {
    std::ofstream log(out_dir / "train_log.jsonl", std::ios::binary);
    write_train_log(log, result.log);
  }
  const auto metrics = trainer.evaluate(EvalStage::test);
  write_text(out_dir / "metrics.json", metrics_to_json(metrics) + "\n");
  save_checkpoint(ckpt, trainer.table(), split.train.users, split.train.items);
  out << to_string(cfg.mode) << ": " << result.log.size() << " epochs, best validation Recall@20 "
      << result.best_validation.recall.at(20) << " at epoch " << result.best_epoch << "\n";
  print_metrics_table(out, metrics);
  return kSuccess;
}

// ---------------------------------------------------------------- evaluate

void add_evaluate(CLI::App* app, Settings& s) {
  const BackboneConfig d;
  s.optional<std::string>(app, "--data", "data", "Prepared split directory");
  s.optional<std::string>(app, "--run", "run", "Training run directory (checkpoint and backbone settings)");
  s.optional<std::string>(app, "--checkpoint", "checkpoint", "Checkpoint file");
  s.option<std::string>(app, "--backbone", "backbone", std::string(to_string(d.kind)), "lightgcn or gccf")
      ->check(CLI::IsMember({"lightgcn", "gccf"}));
  s.option<int>(app, "--layers", "layers", d.layers, "Propagation layers");
  s.option<std::string>(app, "--stage", "stage", "test", "test or validation")
      ->check(CLI::IsMember({"test", "validation"}));
  s.optional<std::string>(app, "--semantic", "semantic", "Semantic JSONL, for --semantic-only");
  s.toggle(app, "--semantic-only", "semantic_only", "Rank by cosine similarity of semantic vectors");
}

EmbeddingTable table_for_split(const Checkpoint& ck, const IdMap& users, const IdMap& items) {
  EmbeddingTable table{users.size(), items.size(), Matrix(users.size() + items.size() + 1, ck.table.dim())};
  for (std::uint32_t u = 0; u < users.size(); ++u) {
    const auto src = ck.users.find(users.raw(u));
    if (!src) throw DataError("checkpoint has no embedding for user '" + users.raw(u) + "'");
    table.values.row(u) = ck.table.values.row(*src);
  }
  const auto nu = static_cast<Eigen::Index>(users.size());
  for (std::uint32_t v = 0; v < items.size(); ++v) {
    const auto src = ck.items.find(items.raw(v));
    if (!src) throw DataError("checkpoint has no embedding for item '" + items.raw(v) + "'");
    table.values.row(nu + v) = ck.table.values.row(static_cast<Eigen::Index>(ck.table.num_users) + *src);
  }
  table.values.row(table.values.rows() - 1) = ck.table.mask_row();
  return table;
}

int run_evaluate(const Json& c, const Settings& s, const std::optional<fs::path>& out_dir, std::ostream& out) {
  const auto data_dir = required_path(c, "data");
  const auto stage = value<std::string>(c, "stage") == "test" ? EvalStage::test : EvalStage::validation;
  const bool semantic_only = value<bool>(c, "semantic_only");
  auto config = c;
  std::vector<fs::path> inputs = split_files(data_dir);
  std::optional<fs::path> ckpt;
  if (semantic_only) {
    inputs.push_back(required_path(c, "semantic"));
  } else {
    if (auto run = optional_path(c, "run")) {
      ckpt = *run / "checkpoint.bin";
      if (fs::is_regular_file(*run / "manifest.json")) {
        const auto trained = read_json(*run / "manifest.json").at("config");
        for (const char* key : {"backbone", "layers"}) {
          if (!s.is_explicit(key) && trained.contains(key)) config[key] = trained.at(key);
        }
      }
    }
    if (auto explicit_ckpt = optional_path(c, "checkpoint")) ckpt = explicit_ckpt;
    if (!ckpt) throw UsageError("--run or --checkpoint is required unless --semantic-only is given");
    inputs.push_back(*ckpt);
  }
  if (out_dir) {
    write_manifest(*out_dir, "evaluate", config, inputs, {{"metrics", (*out_dir / "metrics.json").string()}});
  }

  const auto split = read_split(data_dir);
  MetricsReport metrics;
  if (semantic_only) {
    const auto store = align_store(read_semantic_jsonl(inputs.back()), split.train.users, split.train.items);
    metrics = evaluate_split(semantic_only_scores(store), split, stage);
  } else {
    BackboneConfig backbone;
    try {
      backbone.kind = backbone_from_string(value<std::string>(config, "backbone"));
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    backbone.layers = value<int>(config, "layers");
    const auto table = table_for_split(load_checkpoint(*ckpt), split.train.users, split.train.items);
    const auto adj = build_normalized_adjacency(split.train);
    metrics = evaluate_split(score_all(encode(table.entities(), adj, backbone), table.num_users), split, stage);
  }
  if (out_dir) write_text(*out_dir / "metrics.json", metrics_to_json(metrics) + "\n");
  print_metrics_table(out, metrics);
  return kSuccess;
}

// ---------------------------------------------------------------- report

struct RunGroup {
  std::string label;
  std::vector<fs::path> runs;
  std::vector<MetricsReport> metrics;
};

// Hyperparameters only: seeds and per-run input paths may differ within a group.
Json comparable_config(const Json& config) {
  auto c = config;
  for (const char* key : {"seed", "data", "semantic", "init_from"}) c.erase(key);
  return c;
}

RunGroup load_group(std::string label, const std::vector<fs::path>& runs) {
  RunGroup g{std::move(label), runs, {}};
  if (runs.empty()) throw UsageError("group '" + g.label + "' has no runs");
  std::optional<Json> reference;
  for (const auto& run : runs) {
    const auto manifest = read_json(run / "manifest.json");
    const auto config = comparable_config(manifest.at("config"));
    if (!reference) {
      reference = config;
    } else if (config != *reference) {
      std::string key;
      for (const auto& [k, v] : config.items()) {
        if (!reference->contains(k) || reference->at(k) != v) {
          key = k;
          break;
        }
      }
      if (key.empty()) key = "(key set)";
      throw DataError("group '" + g.label + "': " + run.string() + " differs from " + runs.front().string() +
                      " in setting '" + key + "'; only seeds may differ within a group");
    }
    std::ifstream in(run / "metrics.json");
    if (!in) throw DataError("cannot open " + (run / "metrics.json").string());
    std::stringstream buf;
    buf << in.rdbuf();
    g.metrics.push_back(metrics_from_json(buf.str()));
  }
  return g;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    for (double x : xs) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string improvement_label(double pct) { return (pct >= 0.0 ? "↑" : "↓") + fixed(std::abs(pct), 2) + "%"; }

// Pads to a width in code points; the table holds multibyte glyphs.
std::string pad(const std::string& text, std::size_t width) {
  const auto n = utf8_length(text);
  return n >= width ? text + " " : text + std::string(width - n, ' ');
}

void add_report(CLI::App* app, std::vector<std::string>& groups, std::vector<std::string>& runs,
                std::string& baseline, std::string& json_out) {
  app->add_option("--group", groups, "LABEL=DIR[,DIR...]; repeatable");
  app->add_option("runs", runs, "Run directories forming a single group");
  app->add_option("--baseline", baseline, "Label of the reference group [first group]");
  app->add_option("--json", json_out, "Also write the table as JSON to this file");
}

int run_report(const std::vector<std::string>& group_specs, const std::vector<std::string>& loose_runs,
               std::string baseline, const std::string& json_out, std::ostream& out) {
  std::vector<RunGroup> groups;
  for (const auto& spec : group_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--group expects LABEL=DIR[,DIR...], got '" + spec + "'");
    std::vector<fs::path> dirs;
    std::stringstream list(spec.substr(eq + 1));
    for (std::string dir; std::getline(list, dir, ',');) {
      if (!dir.empty()) dirs.emplace_back(dir);
    }
    groups.push_back(load_group(spec.substr(0, eq), dirs));
  }
  if (!loose_runs.empty()) groups.push_back(load_group("runs", {loose_runs.begin(), loose_runs.end()}));
  if (groups.empty()) throw UsageError("report needs run directories or --group");
  if (baseline.empty()) baseline = groups.front().label;
  const auto base_it = std::find_if(groups.begin(), groups.end(), [&](const RunGroup& g) { return g.label == baseline; });
  if (base_it == groups.end()) throw UsageError("no group labelled '" + baseline + "'");

  const auto& cutoffs = kDefaultCutoffs;
  struct Column {
    std::string name;
    bool recall;
    int n;
  };
  std::vector<Column> columns;
  for (int n : cutoffs) columns.push_back({"Recall@" + std::to_string(n), true, n});
  for (int n : cutoffs) columns.push_back({"NDCG@" + std::to_string(n), false, n});

  auto column_values = [](const RunGroup& g, const Column& col) {
    std::vector<double> xs;
    for (const auto& m : g.metrics) xs.push_back(col.recall ? m.recall.at(col.n) : m.ndcg.at(col.n));
    return xs;
  };

  std::size_t label_width = std::string("Best Imprv.").size();
  for (const auto& g : groups) label_width = std::max(label_width, g.label.size());
  const std::size_t cell = 17;
  const std::size_t first = label_width + 2;

  Json report{{"baseline", baseline}, {"groups", Json::array()}};
  auto emit = [&out](std::string line) {
    line.erase(line.find_last_not_of(' ') + 1);
    out << line << '\n';
  };
  std::string line = pad("Model", first);
  for (const auto& col : columns) line += pad(col.name, cell);
  emit(line);
  for (const auto& g : groups) {
    Json jg{{"label", g.label}, {"runs", g.runs.size()}, {"mean", Json::object()}, {"std", Json::object()}};
    line = pad(g.label, first);
    for (const auto& col : columns) {
      const auto s = summarize(column_values(g, col));
      jg["mean"][col.name] = s.mean;
      jg["std"][col.name] = s.std;
      line += pad(fixed(s.mean, 4) + "±" + fixed(s.std, 4), cell);
    }
    emit(line);
    report["groups"].push_back(jg);
  }
  if (groups.size() > 1) {
    Json best = Json::object();
    line = pad("Best Imprv.", first);
    for (const auto& col : columns) {
      const double base = summarize(column_values(*base_it, col)).mean;
      double top = -std::numeric_limits<double>::infinity();
      for (const auto& g : groups) {
        if (g.label != baseline) top = std::max(top, summarize(column_values(g, col)).mean);
      }
      const double pct = base > 0.0 ? 100.0 * (top - base) / base : 0.0;
      best[col.name] = pct;
      line += pad(improvement_label(pct), cell);
    }
    emit(line);
    report["best_improvement_pct"] = best;
  }
  if (!json_out.empty()) write_text(json_out, report.dump(2) + "\n");
  return kSuccess;
}

}  // namespace

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic alignment for graph collaborative filtering"};
  app.set_version_flag("--version", std::string(SEMALIGN_VERSION));
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    Settings settings;
    std::string out;
  };
  std::list<Command> commands;  // stable addresses for option callbacks
  auto make = [&](const std::string& name, const std::string& description, bool out_required) -> Command& {
    auto& cmd = commands.emplace_back(Command{app.add_subcommand(name, description), {}, {}});
    auto* o = cmd.app->add_option("--out", cmd.out, "Run directory for outputs and the manifest");
    if (out_required) o->required();
    cmd.settings.config_option(cmd.app);
    return cmd;
  };
  auto& prepare = make("prepare", "Load, filter and split an interaction file", true);
  add_prepare(prepare.app, prepare.settings);
  auto& synth = make("synth", "Generate planted synthetic interactions and semantic vectors", true);
  add_synth(synth.app, synth.settings);
  auto& gen = make("gen-profiles", "Generate item, then user profiles with a chat service", true);
  add_gen_profiles(gen.app, gen.settings);
  auto& embed = make("embed", "Embed profiles into a semantic store", true);
  add_embed(embed.app, embed.settings);
  auto& train = make("train", "Train a backbone with optional semantic alignment", true);
  add_train(train.app, train.settings);
  auto& evaluate = make("evaluate", "All-rank evaluation of a checkpoint or of semantic vectors", false);
  add_evaluate(evaluate.app, evaluate.settings);

  std::vector<std::string> groups;
  std::vector<std::string> loose_runs;
  std::string baseline;
  std::string json_out;
  auto* report = app.add_subcommand("report", "Aggregate multi-seed runs into a mean±std table");
  add_report(report, groups, loose_runs, baseline, json_out);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (report->parsed()) return run_report(groups, loose_runs, baseline, json_out, out);
    if (prepare.app->parsed()) return run_prepare(prepare.settings.resolve(), prepare.out, out);
    if (synth.app->parsed()) return run_synth(synth.settings.resolve(), synth.out, out);
    if (gen.app->parsed()) return run_gen_profiles(gen.settings.resolve(), gen.out, out);
    if (embed.app->parsed()) return run_embed(embed.settings.resolve(), embed.out, out);
    if (train.app->parsed()) return run_train(train.settings.resolve(), train.out, out);
    if (evaluate.app->parsed()) {
      const auto c = evaluate.settings.resolve();
      return run_evaluate(c, evaluate.settings,
                          evaluate.out.empty() ? std::nullopt : std::optional<fs::path>(evaluate.out), out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ServiceError& e) {
    err << "service error: " << e.what() << "\n";
    return kService;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}

}  // namespace semalign::cli
