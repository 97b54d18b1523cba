#include "givt/harness/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "givt/error.hpp"

namespace givt::harness {

using nlohmann::json;

namespace {

json adam_json(const TrainConfig& t)
{
    return {{"steps", t.steps},
            {"batch_size", t.batch_size},
            {"learning_rate", t.adam.learning_rate},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"weight_decay", t.adam.weight_decay},
            {"warmup_steps", t.adam.warmup_steps},
            {"final_lr_fraction", t.adam.final_lr_fraction},
            {"grad_clip_norm", t.adam.grad_clip_norm},
            {"log_every", t.log_every}};
}

void read_train(const json& j, TrainConfig& t)
{
    t.steps = j.at("steps").get<std::size_t>();
    t.batch_size = j.at("batch_size").get<std::size_t>();
    t.adam.learning_rate = j.at("learning_rate").get<double>();
    t.adam.beta1 = j.at("beta1").get<double>();
    t.adam.beta2 = j.at("beta2").get<double>();
    t.adam.weight_decay = j.at("weight_decay").get<double>();
    t.adam.warmup_steps = j.at("warmup_steps").get<std::size_t>();
    t.adam.final_lr_fraction = j.at("final_lr_fraction").get<double>();
    t.adam.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    t.adam.total_steps = t.steps;
    t.log_every = j.at("log_every").get<std::size_t>();
}

json vae_json(const VaeConfig& v)
{
    return {{"image_size", v.image_size}, {"image_channels", v.image_channels},
            {"d", v.d},                   {"f", v.f},
            {"widths", v.widths},         {"beta", v.beta},
            {"sigma_floor", v.sigma_floor}};
}

json givt_json(const GivtConfig& g)
{
    return {{"layers", g.layers},
            {"heads", g.heads},
            {"hidden", g.hidden},
            {"mlp_hidden", g.mlp_hidden},
            {"k", g.k},
            {"label_dropout", g.label_dropout},
            {"mode", to_string(g.mode)},
            {"sigma_floor", g.sigma_floor}};
}

json to_json(const RunConfig& c)
{
    const SamplerConfig& s = c.sample;
    json j;
    j["task"] = c.task;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir.string();
    j["data"] = {{"num_classes", c.data.num_classes},
                 {"train_size", c.data.train_size},
                 {"heldout_size", c.data.heldout_size}};
    j["vae"] = vae_json(c.vae);
    j["vae_train"] = adam_json(c.vae_train);
    j["givt"] = givt_json(c.givt);
    j["givt_train"] = adam_json(c.givt_train);
    j["sample"] = {{"sampler", s.sampler},
                   {"temperature", s.temperature},
                   {"guidance",
                    {{"enabled", s.guidance},
                     {"w", s.cfg.w},
                     {"proposal_budget", s.cfg.proposal_budget},
                     {"proposal_scale", s.cfg.proposal_scale},
                     {"bound_safety", s.cfg.bound_safety},
                     {"bound_grid_points", s.cfg.bound_grid_points},
                     {"bound_grid_halfwidth", s.cfg.bound_grid_halfwidth}}},
                   {"beams", s.beams},
                   {"fans", s.fans},
                   {"schedule", s.schedule.name()},
                   {"steps", s.schedule.steps},
                   {"choice_temperature", s.schedule.choice_temperature},
                   {"anneal_choice", s.schedule.anneal_choice},
                   {"truncation", s.truncation ? json(*s.truncation) : json(nullptr)},
                   {"use_cache", s.use_cache},
                   {"samples_per_class", s.samples_per_class}};
    j["paths"] = {{"vae_checkpoint", c.vae_checkpoint.string()}, {"givt_checkpoint", c.givt_checkpoint.string()}};
    j["sweep"] = {{"betas", c.sweep_betas}};
    j["eval"] = {{"batches", c.eval_batches}};
    j["gradcheck"] = {{"probes", c.gradcheck_probes}};
    return j;
}

RunConfig from_json(const json& j)
{
    RunConfig c;
    c.task = j.at("task").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
    const json& d = j.at("data");
    c.data.num_classes = d.at("num_classes").get<std::size_t>();
    c.data.train_size = d.at("train_size").get<std::size_t>();
    c.data.heldout_size = d.at("heldout_size").get<std::size_t>();
    const json& v = j.at("vae");
    c.vae.image_size = v.at("image_size").get<std::size_t>();
    c.vae.image_channels = v.at("image_channels").get<std::size_t>();
    c.vae.d = v.at("d").get<std::size_t>();
    c.vae.f = v.at("f").get<std::size_t>();
    c.vae.widths = v.at("widths").get<std::vector<std::size_t>>();
    c.vae.beta = v.at("beta").get<double>();
    c.vae.sigma_floor = v.at("sigma_floor").get<double>();
    read_train(j.at("vae_train"), c.vae_train);
    const json& g = j.at("givt");
    c.givt.layers = g.at("layers").get<std::size_t>();
    c.givt.heads = g.at("heads").get<std::size_t>();
    c.givt.hidden = g.at("hidden").get<std::size_t>();
    c.givt.mlp_hidden = g.at("mlp_hidden").get<std::size_t>();
    c.givt.k = g.at("k").get<std::size_t>();
    c.givt.label_dropout = g.at("label_dropout").get<double>();
    c.givt.mode = parse_mode(g.at("mode").get<std::string>());
    c.givt.sigma_floor = g.at("sigma_floor").get<double>();
    read_train(j.at("givt_train"), c.givt_train);
    const json& s = j.at("sample");
    c.sample.sampler = s.at("sampler").get<std::string>();
    c.sample.temperature = s.at("temperature").get<double>();
    const json& gd = s.at("guidance");
    c.sample.guidance = gd.at("enabled").get<bool>();
    c.sample.cfg.w = gd.at("w").get<double>();
    c.sample.cfg.proposal_budget = gd.at("proposal_budget").get<std::size_t>();
    c.sample.cfg.proposal_scale = gd.at("proposal_scale").get<double>();
    c.sample.cfg.bound_safety = gd.at("bound_safety").get<double>();
    c.sample.cfg.bound_grid_points = gd.at("bound_grid_points").get<std::size_t>();
    c.sample.cfg.bound_grid_halfwidth = gd.at("bound_grid_halfwidth").get<double>();
    c.sample.beams = s.at("beams").get<std::size_t>();
    c.sample.fans = s.at("fans").get<std::size_t>();
    c.sample.schedule = ScheduleConfig::parse(s.at("schedule").get<std::string>());
    c.sample.schedule.steps = s.at("steps").get<std::size_t>();
    c.sample.schedule.choice_temperature = s.at("choice_temperature").get<double>();
    c.sample.schedule.anneal_choice = s.at("anneal_choice").get<bool>();
    if (!s.at("truncation").is_null()) {
        c.sample.truncation = s.at("truncation").get<double>();
    }
    c.sample.use_cache = s.at("use_cache").get<bool>();
    c.sample.samples_per_class = s.at("samples_per_class").get<std::size_t>();
    c.vae_checkpoint = j.at("paths").at("vae_checkpoint").get<std::string>();
    c.givt_checkpoint = j.at("paths").at("givt_checkpoint").get<std::string>();
    c.sweep_betas = j.at("sweep").at("betas").get<std::vector<double>>();
    c.eval_batches = j.at("eval").at("batches").get<std::size_t>();
    c.gradcheck_probes = j.at("gradcheck").at("probes").get<std::size_t>();
    return c;
}

// Copies `src` into `dst`, refusing keys the defaults do not have.
void overlay(json& dst, const json& src, const std::string& where)
{
    if (!src.is_object()) {
        throw Error(ErrorCode::config_mismatch, "expected an object at '" + where + "'");
    }
    for (const auto& [key, value] : src.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!dst.contains(key)) {
            throw Error(ErrorCode::config_mismatch, "unknown config key '" + path + "'");
        }
        if (dst[key].is_object()) {
            overlay(dst[key], value, path);
        } else {
            dst[key] = value;
        }
    }
}

void apply_override(json& j, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorCode::invalid_argument, "override must look like key.path=value, got '" + assignment + "'");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) {
            throw Error(ErrorCode::config_mismatch, "unknown config key '" + path + "'");
        }
        node = &(*node)[key];
        if (dot == std::string::npos) {
            break;
        }
        start = dot + 1;
    }
    if (node->is_object()) {
        throw Error(ErrorCode::invalid_argument, "'" + path + "' is a section, not a value");
    }
    *node = value;
}

} // namespace

SampleOptions SamplerConfig::options() const
{
    SampleOptions o;
    o.temperature = temperature;
    if (guidance) {
        o.guidance = cfg;
    }
    o.use_cache = use_cache;
    o.truncation = truncation;
    return o;
}

std::string SamplerConfig::tag() const
{
    const auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        return std::string(buf);
    };
    std::string t = sampler + "_t" + num(temperature);
    if (guidance) {
        t += "_w" + num(cfg.w);
    }
    if (sampler == "beam") {
        t += "_b" + std::to_string(beams) + "f" + std::to_string(fans);
    }
    if (sampler == "maskgit") {
        std::string sched = schedule.name();
        std::replace(sched.begin(), sched.end(), ':', '-');
        t += "_" + sched + "_s" + std::to_string(schedule.steps) + "_tc" + num(schedule.choice_temperature);
    }
    if (truncation) {
        t += "_q" + num(*truncation);
    }
    return t;
}

void RunConfig::finalize()
{
    vae.validate();
    givt.d = vae.d;
    givt.tokens = vae.tokens();
    givt.num_classes = data.num_classes;
    givt.validate();
    vae_train.adam.total_steps = vae_train.steps;
    givt_train.adam.total_steps = givt_train.steps;
    if (data.num_classes < 1 || data.train_size < 1 || data.heldout_size < 1) {
        throw Error(ErrorCode::invalid_argument, "data section needs positive sizes");
    }
    if (vae_train.batch_size < 1 || givt_train.batch_size < 1) {
        throw Error(ErrorCode::invalid_argument, "batch sizes must be >= 1");
    }
    if (sample.sampler != "ancestral" && sample.sampler != "beam" && sample.sampler != "maskgit") {
        throw Error(ErrorCode::invalid_argument, "sampler must be ancestral, beam or maskgit");
    }
    sample.schedule.validate();
    sample.options().validate();
}

std::string to_json_text(const RunConfig& cfg)
{
    return to_json(cfg).dump(2);
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides)
{
    json merged = to_json(RunConfig{});
    json user = json::parse(text, nullptr, false);
    if (user.is_discarded()) {
        throw Error(ErrorCode::format, "config is not valid JSON");
    }
    overlay(merged, user, "");
    for (const std::string& o : overrides) {
        apply_override(merged, o);
    }
    RunConfig cfg;
    try {
        cfg = from_json(merged);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config_mismatch, std::string("bad config value: ") + e.what());
    }
    cfg.finalize();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string vae_identity(const VaeConfig& cfg)
{
    json j = vae_json(cfg);
    j.erase("beta");
    return j.dump();
}

std::string givt_identity(const GivtConfig& cfg)
{
    json j = givt_json(cfg);
    j.erase("label_dropout");
    j["d"] = cfg.d;
    j["tokens"] = cfg.tokens;
    j["num_classes"] = cfg.num_classes;
    return j.dump();
}

std::string fnv1a_hex(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace givt::harness
