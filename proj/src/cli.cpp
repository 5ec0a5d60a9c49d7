#include "dfsp/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dfsp/errors.hpp"
#include "dfsp/format.hpp"
#include "dfsp/pipeline.hpp"

namespace dfsp {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace

void RunConfig::validate() const {
    train.validate();
    if (synthetic.has_value() == data_dir.has_value()) {
        throw UsageError("exactly one data source is required (--synthetic or --data)");
    }
    if (!std::isfinite(threshold)) throw UsageError("threshold must be finite");
}

Dataset RunConfig::load_data() const {
    if (synthetic) return generate_synthetic(*synthetic).data;
    if (data_dir) return load_manifest(*data_dir);
    throw UsageError("no data source configured");
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j = to_json(c.train);
    if (c.synthetic) j["synthetic"] = c.synthetic->to_string();
    if (c.data_dir) j["data"] = c.data_dir->string();
    j["world"] = to_string(c.world);
    j["threshold"] = c.threshold;
    if (c.embeddings) j["embeddings"] = c.embeddings->string();
    j["output"] = c.output.string();
    return j;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
    c.train = train_config_from_json(j, c.train);
    if (j.contains("synthetic")) {
        c.synthetic = SyntheticSpec::parse(j.at("synthetic").get<std::string>());
        c.data_dir.reset();
    }
    if (j.contains("data")) {
        if (j.contains("synthetic")) throw UsageError("config sets both 'synthetic' and 'data'");
        c.data_dir = j.at("data").get<std::string>();
        c.synthetic.reset();
    }
    if (j.contains("world")) c.world = parse_world_mode(j.at("world").get<std::string>());
    if (j.contains("threshold")) c.threshold = j.at("threshold").get<double>();
    if (j.contains("embeddings")) c.embeddings = j.at("embeddings").get<std::string>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    return c;
}

fs::path default_output_dir(const std::string& command) {
    const char* root = std::getenv("DFSP_OUTPUT_ROOT");
    return (root && *root ? fs::path(root) : fs::path("runs")) / command;
}

namespace {

// ---- flags ---------------------------------------------------------------------

template <class T>
struct Flag {
    T value{};
    CLI::Option* opt = nullptr;
    bool set() const { return opt && opt->count() > 0; }
};

struct RunFlags {
    Flag<std::string> config, synthetic, data, variant, world, embeddings, out;
    Flag<double> alpha, beta, lr, threshold, temperature;
    Flag<std::size_t> K, epochs, batch, d, d_f, p, L_v;
    Flag<std::uint64_t> seed;
    Flag<bool> no_dfm;
};

void add_train_flags(CLI::App& cmd, RunFlags& f) {
    f.config.opt = cmd.add_option("--config", f.config.value, "JSON config file; flags override it");
    f.synthetic.opt = cmd.add_option("--synthetic", f.synthetic.value,
                                     "synthetic data spec, e.g. n=5,m=5,dim=16,samples=20,sigma=0.05,unseen=0.2,seed=0");
    f.data.opt = cmd.add_option("--data", f.data.value, "dataset manifest directory");
    f.synthetic.opt->excludes(f.data.opt);
    f.variant.opt = cmd.add_option("--variant", f.variant.value, "fusion variant: t2i | i2t | BiF");
    f.alpha.opt = cmd.add_option("--alpha", f.alpha.value, "weight of the state/object loss");
    f.beta.opt = cmd.add_option("--beta", f.beta.value, "weight of the soft-prompt loss");
    f.K.opt = cmd.add_option("--K", f.K.value, "number of fusion blocks");
    f.epochs.opt = cmd.add_option("--epochs", f.epochs.value);
    f.batch.opt = cmd.add_option("--batch-size", f.batch.value);
    f.lr.opt = cmd.add_option("--lr", f.lr.value, "Adam learning rate");
    f.temperature.opt = cmd.add_option("--temperature", f.temperature.value);
    f.d.opt = cmd.add_option("--d", f.d.value, "prompt embedding width");
    f.d_f.opt = cmd.add_option("--d-f", f.d_f.value, "feature width");
    f.p.opt = cmd.add_option("--p", f.p.value, "prefix length");
    f.L_v.opt = cmd.add_option("--L-v", f.L_v.value, "image tokens per sample");
    f.seed.opt = cmd.add_option("--seed", f.seed.value);
    f.no_dfm.opt = cmd.add_flag("--no-dfm", f.no_dfm.value, "soft prompt branch only");
}

void add_eval_flags(CLI::App& cmd, RunFlags& f) {
    f.world.opt = cmd.add_option("--world", f.world.value, "closed | open");
    f.threshold.opt = cmd.add_option("--threshold", f.threshold.value, "open-world feasibility threshold T");
    f.embeddings.opt = cmd.add_option("--embeddings", f.embeddings.value,
                                      "primitive embedding file for the feasibility filter");
}

void add_out_flag(CLI::App& cmd, RunFlags& f) {
    f.out.opt = cmd.add_option("--out", f.out.value, "output directory (default $DFSP_OUTPUT_ROOT/<command>)");
}

json read_json_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open config " + file.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("config " + file.string() + ": " + e.what());
    }
}

RunConfig resolve(const RunFlags& f, const std::string& command) {
    RunConfig c;
    c.output = default_output_dir(command);
    if (f.config.set()) c = run_config_from_json(read_json_file(f.config.value), c);
    TrainConfig& t = c.train;
    if (f.synthetic.set()) {
        try {
            c.synthetic = SyntheticSpec::parse(f.synthetic.value);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
        c.data_dir.reset();
    }
    if (f.data.set()) {
        c.data_dir = f.data.value;
        c.synthetic.reset();
    }
    if (f.variant.set()) t.model.variant = parse_fusion_variant(f.variant.value);
    if (f.alpha.set()) t.weights.alpha = f.alpha.value;
    if (f.beta.set()) t.weights.beta = f.beta.value;
    if (f.K.set()) t.model.fusion_blocks = f.K.value;
    if (f.epochs.set()) t.epochs = f.epochs.value;
    if (f.batch.set()) t.batch_size = f.batch.value;
    if (f.lr.set()) t.adam.learning_rate = f.lr.value;
    if (f.temperature.set()) t.model.temperature = f.temperature.value;
    if (f.d.set()) t.model.prompt_dim = f.d.value;
    if (f.d_f.set()) t.model.feature_dim = f.d_f.value;
    if (f.p.set()) t.model.prefix_length = f.p.value;
    if (f.L_v.set()) t.model.image_tokens = f.L_v.value;
    if (f.seed.set()) t.seed = f.seed.value;
    if (f.no_dfm.set()) t.model.use_dfm = false;
    if (f.world.set()) c.world = parse_world_mode(f.world.value);
    if (f.threshold.set()) c.threshold = f.threshold.value;
    if (f.embeddings.set()) c.embeddings = f.embeddings.value;
    if (f.out.set()) c.output = f.out.value;
    return c;
}

// ---- output helpers -------------------------------------------------------------

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write " + file.string());
    out << text;
    if (!out) throw DataError("failed writing " + file.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_reports(const fs::path& dir, const MetricsReport& report, double threshold) {
    std::ostringstream metrics, curve;
    write_report_json(metrics, report, threshold);
    write_curve_csv(curve, report);
    write_text(dir / "metrics.json", metrics.str());
    write_text(dir / "curve.csv", curve.str());
}

std::string fmt(double v) { return format_double(v); }

EvalOptions eval_options(const RunConfig& c, const Dataset& data, Split split) {
    EvalOptions o;
    o.split = split;
    o.world = c.world;
    o.threshold = c.threshold;
    if (c.embeddings) o.embeddings = load_embeddings(*c.embeddings, data.states, data.objects);
    return o;
}

void print_report(std::ostream& out, const MetricsReport& r) {
    out << "world=" << to_string(r.world) << " S=" << fmt(r.best_seen) << " U=" << fmt(r.best_unseen)
        << " H=" << fmt(r.best_harmonic) << " AUC=" << fmt(r.auc) << '\n';
}

struct RunOutcome {
    TrainResult trained;
    EvalResult eval;
};

RunOutcome train_and_evaluate(RunConfig& c, const Dataset& data, std::ostream* log_out,
                              std::ostream* progress) {
    c.train.model.input_dim = data.samples.dim();
    c.validate();
    RunOutcome r;
    r.trained = train(data, c.train, [&](const EpochLog& e) {
        if (log_out) *log_out << to_json_line(e) << '\n';
        if (progress) {
            *progress << "epoch " << e.epoch << " train=" << fmt(e.train.total)
                       << " val=" << fmt(e.val_total) << '\n';
        }
    });
    r.eval = evaluate(r.trained.best.model, data, eval_options(c, data, Split::test));
    return r;
}

// ---- commands ---------------------------------------------------------------------

int cmd_train(RunConfig c, std::ostream& out) {
    c.validate();
    const Dataset data = c.load_data();
    ensure_dir(c.output);
    std::ostringstream log;
    RunOutcome r = train_and_evaluate(c, data, &log, &out);
    write_text(c.output / "config.json", to_json(c).dump(2) + "\n");
    write_text(c.output / "train_log.jsonl", log.str());
    save_checkpoint(r.trained.best, c.output / "checkpoint.json");
    write_reports(c.output, r.eval.report, c.threshold);
    out << "best epoch " << r.trained.best.epoch << " val=" << fmt(r.trained.best.val_loss) << '\n';
    print_report(out, r.eval.report);
    out << "wrote " << c.output.string() << '\n';
    return kExitOk;
}

int cmd_eval(RunConfig c, const std::string& checkpoint_file, const std::string& split_name,
             std::ostream& out) {
    Checkpoint ckpt = load_checkpoint(checkpoint_file);
    if (!c.synthetic && !c.data_dir) throw UsageError("eval needs --synthetic or --data");
    const Dataset data = c.load_data();
    if (data.split_hash() != ckpt.split_hash) {
        throw DataError("checkpoint was trained on split " + ckpt.split_hash + ", data has split " +
                        data.split_hash());
    }
    const Split split = parse_split(split_name);
    ensure_dir(c.output);
    if (split == Split::train) {
        // training samples carry seen pairs only, so only S is defined
        if (c.world != WorldMode::closed) throw UsageError("--split train is closed-world only");
        const double acc = seen_accuracy(ckpt.model, data, Split::train);
        nlohmann::ordered_json j;
        j["split"] = "train";
        j["world"] = "closed";
        j["S"] = acc;
        j["num_samples"] = data.samples.select(Split::train).size();
        write_text(c.output / "metrics.json", j.dump(2) + "\n");
        out << "split=train S=" << fmt(acc) << '\n';
        out << "wrote " << c.output.string() << '\n';
        return kExitOk;
    }
    const EvalResult r = evaluate(ckpt.model, data, eval_options(c, data, split));
    write_reports(c.output, r.report, c.threshold);
    print_report(out, r.report);
    if (r.feasibility) {
        out << "feasible pairs " << r.feasibility->retained.size() << " of "
            << data.states.size() * data.objects.size() << " (T=" << fmt(c.threshold) << ")\n";
    }
    out << "wrote " << c.output.string() << '\n';
    return kExitOk;
}

std::string csv_quote(const std::string& s) {
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch == '\n' ? ' ' : ch;
    }
    return q + "\"";
}

int cmd_sweep(RunConfig base, const std::string& param, const std::vector<double>& values,
              std::ostream& out, std::ostream& err) {
    if (param != "alpha" && param != "beta" && param != "K" && param != "T") {
        throw UsageError("--param must be one of alpha, beta, K, T");
    }
    if (values.empty()) throw UsageError("--values must not be empty");
    if (param == "T") base.world = WorldMode::open;
    base.validate();
    const Dataset data = base.load_data();
    ensure_dir(base.output);

    std::ostringstream csv;
    csv << "param,value,status,S,U,H,AUC,best_epoch,message\n";
    std::size_t failures = 0;
    int last_code = kExitOk;
    std::optional<TrainResult> shared;  // T does not affect training
    for (double v : values) {
        RunConfig c = base;
        std::string status = "ok", message;
        MetricsReport report;
        std::size_t best_epoch = 0;
        try {
            if (param == "alpha") c.train.weights.alpha = v;
            if (param == "beta") c.train.weights.beta = v;
            if (param == "T") c.threshold = v;
            if (param == "K") {
                if (!(v >= 1.0) || v != std::floor(v)) throw UsageError("K values must be positive integers");
                c.train.model.fusion_blocks = static_cast<std::size_t>(v);
            }
            if (param == "T") {
                if (!shared) {
                    c.train.model.input_dim = data.samples.dim();
                    c.validate();
                    shared = train(data, c.train);
                }
                report = evaluate(shared->best.model, data, eval_options(c, data, Split::test)).report;
                best_epoch = shared->best.epoch;
            } else {
                RunOutcome r = train_and_evaluate(c, data, nullptr, nullptr);
                report = r.eval.report;
                best_epoch = r.trained.best.epoch;
            }
        } catch (const std::exception& e) {
            status = "failed";
            message = e.what();
            ++failures;
            last_code = dynamic_cast<const NumericError*>(&e) ? kExitNumeric : kExitData;
            err << param << "=" << fmt(v) << ": " << message << '\n';
        }
        csv << param << ',' << fmt(v) << ',' << status << ',';
        if (status == "ok") {
            csv << fmt(report.best_seen) << ',' << fmt(report.best_unseen) << ','
                << fmt(report.best_harmonic) << ',' << fmt(report.auc) << ',' << best_epoch;
        } else {
            csv << ",,,,";
        }
        csv << ',' << csv_quote(message) << '\n';
        out << param << "=" << fmt(v) << " " << status;
        if (status == "ok") out << " H=" << fmt(report.best_harmonic) << " AUC=" << fmt(report.auc);
        out << '\n';
    }
    write_text(base.output / "config.json", to_json(base).dump(2) + "\n");
    write_text(base.output / "sweep.csv", csv.str());
    out << "wrote " << (base.output / "sweep.csv").string() << '\n';
    return failures == values.size() ? last_code : kExitOk;
}

int cmd_gen_synthetic(const std::string& spec_text, const fs::path& dir, std::ostream& out) {
    SyntheticSpec spec;
    try {
        spec = SyntheticSpec::parse(spec_text);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const SyntheticData syn = generate_synthetic(spec);
    write_manifest(syn.data, dir);
    out << "wrote " << syn.data.samples.size() << " samples (" << spec.to_string() << ") to "
        << dir.string() << '\n';
    return kExitOk;
}

struct GradFlags {
    std::size_t n = 3, m = 3, d_f = 8, K = 1, batch = 6;
    std::string variant = "t2i";
    double alpha = LossWeights{}.alpha, beta = LossWeights{}.beta;
    double step = GradCheckOptions{}.step, tolerance = GradCheckOptions{}.tolerance;
    std::uint64_t seed = 0;
    bool no_dfm = false;
    std::string corrupt;
};

int cmd_gradcheck(const GradFlags& g, std::ostream& out) {
    GradCheckSetup s;
    s.num_states = g.n;
    s.num_objects = g.m;
    s.feature_dim = g.d_f;
    s.batch = g.batch;
    s.model.fusion_blocks = g.K;
    s.model.variant = parse_fusion_variant(g.variant);
    s.model.use_dfm = !g.no_dfm;
    s.weights = {g.alpha, g.beta};
    s.seed = g.seed;
    GradCheckOptions opts;
    opts.step = g.step;
    opts.tolerance = g.tolerance;
    const GradCheckReport r = model_grad_check(s, opts, g.corrupt);
    for (const GradCheckGroup& grp : r.groups) {
        const bool ok = grp.max_rel_error < opts.tolerance;
        out << (ok ? "ok   " : "FAIL ") << grp.name << " max_rel=" << fmt(grp.max_rel_error);
        if (!ok) {
            out << " at [" << grp.worst_index << "] analytic=" << fmt(grp.analytic)
                << " numeric=" << fmt(grp.numeric);
        }
        out << '\n';
    }
    out << (r.passed ? "PASS" : "FAIL") << " max_rel=" << fmt(r.max_rel_error)
        << " worst=" << r.worst_group << '\n';
    return r.passed ? kExitOk : kExitNumeric;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decomposed fusion with soft prompts for compositional zero-shot learning", "dfsp"};
    app.require_subcommand(1);

    RunFlags tf;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model and evaluate it on the test split");
    add_train_flags(*train_cmd, tf);
    add_eval_flags(*train_cmd, tf);
    add_out_flag(*train_cmd, tf);

    RunFlags ef;
    std::string checkpoint, split = "test";
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.json from train")->required();
    ef.config.opt = eval_cmd->add_option("--config", ef.config.value, "JSON config file; flags override it");
    ef.synthetic.opt = eval_cmd->add_option("--synthetic", ef.synthetic.value, "synthetic data spec");
    ef.data.opt = eval_cmd->add_option("--data", ef.data.value, "dataset manifest directory");
    ef.synthetic.opt->excludes(ef.data.opt);
    eval_cmd->add_option("--split", split, "train | val | test (train reports S only)");
    add_eval_flags(*eval_cmd, ef);
    add_out_flag(*eval_cmd, ef);

    RunFlags sf;
    std::string param;
    std::vector<double> values;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "train and evaluate once per parameter value");
    add_train_flags(*sweep_cmd, sf);
    add_eval_flags(*sweep_cmd, sf);
    add_out_flag(*sweep_cmd, sf);
    sweep_cmd->add_option("--param", param, "alpha | beta | K | T")->required();
    sweep_cmd->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

    std::string gen_spec = SyntheticSpec{}.to_string();
    std::string gen_out;
    CLI::App* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic dataset manifest");
    gen_cmd->add_option("--synthetic", gen_spec, "synthetic data spec");
    gen_cmd->add_option("--out", gen_out, "output directory (default $DFSP_OUTPUT_ROOT/gen-synthetic)");

    GradFlags gf;
    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the training objective");
    grad_cmd->add_option("--n", gf.n, "number of states");
    grad_cmd->add_option("--m", gf.m, "number of objects");
    grad_cmd->add_option("--d-f", gf.d_f, "feature width");
    grad_cmd->add_option("--K", gf.K, "fusion blocks");
    grad_cmd->add_option("--batch", gf.batch, "samples in the checked batch");
    grad_cmd->add_option("--variant", gf.variant, "t2i | i2t | BiF");
    grad_cmd->add_option("--alpha", gf.alpha);
    grad_cmd->add_option("--beta", gf.beta);
    grad_cmd->add_option("--step", gf.step, "central-difference step");
    grad_cmd->add_option("--tolerance", gf.tolerance, "max relative error");
    grad_cmd->add_option("--seed", gf.seed);
    grad_cmd->add_flag("--no-dfm", gf.no_dfm);
    grad_cmd->add_option("--corrupt", gf.corrupt, "perturb the gradient of this parameter (test fixture)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(resolve(tf, "train"), out);
        if (*eval_cmd) return cmd_eval(resolve(ef, "eval"), checkpoint, split, out);
        if (*sweep_cmd) return cmd_sweep(resolve(sf, "sweep"), param, values, out, err);
        if (*gen_cmd) {
            return cmd_gen_synthetic(gen_spec, gen_out.empty() ? default_output_dir("gen-synthetic") : fs::path(gen_out),
                                     out);
        }
        if (*grad_cmd) return cmd_gradcheck(gf, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << '\n';
        return kExitData;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace dfsp
