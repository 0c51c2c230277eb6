#include "defog/training.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace defog {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos)
        return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "off")
        return false;
    throw UserError("config: bad boolean for " + key + ": '" + v + "'");
}

template <class T>
T parse_num(const std::string& v, const std::string& key) {
    std::istringstream ss(v);
    T out;
    ss >> out;
    if (ss.fail() || !ss.eof())
        throw UserError("config: bad value for " + key + ": '" + v + "'");
    return out;
}

UpsampleMode upsample_from_string(const std::string& s) {
    if (s == "uim")
        return UpsampleMode::kUim;
    if (s == "deconv")
        return UpsampleMode::kDeconv;
    if (s == "bilinear")
        return UpsampleMode::kBilinear;
    if (s == "pixelshuffle")
        return UpsampleMode::kPixelShuffle;
    throw UserError("config: upsample must be uim, deconv, bilinear, or pixelshuffle");
}

std::string upsample_to_string(UpsampleMode m) {
    switch (m) {
    case UpsampleMode::kUim: return "uim";
    case UpsampleMode::kDeconv: return "deconv";
    case UpsampleMode::kBilinear: return "bilinear";
    case UpsampleMode::kPixelShuffle: return "pixelshuffle";
    }
    return "?";
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0f))
        throw UserError("config: lr must be > 0");
    if (batch_size != 1)
        throw UserError("config: only batch_size = 1 is supported");
    if (epochs < 1)
        throw UserError("config: epochs must be >= 1");
    if (crop_to > resize_to)
        throw UserError("config: crop_to must be <= resize_to");
    if (crop_to < 4)
        throw UserError("config: crop_to must be >= 4");
    if (replay_buffer < 0)
        throw UserError("config: replay_buffer must be >= 0");
    if (dy_kind == Role::kGenerator)
        throw UserError("config: dy_kind must be a discriminator role");
}

NetworkSpec TrainConfig::generator_spec() const {
    NetworkSpec s = NetworkSpec::generator();
    s.upsample = upsample;
    s.long_range_residual = long_range_residual;
    return s;
}

void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "lr") c.lr = parse_num<float>(value, key);
    else if (key == "batch_size") c.batch_size = parse_num<int>(value, key);
    else if (key == "epochs") c.epochs = parse_num<int>(value, key);
    else if (key == "resize_to") c.resize_to = parse_num<int>(value, key);
    else if (key == "crop_to") c.crop_to = parse_num<int>(value, key);
    else if (key == "lambda1") c.lambda1 = parse_num<float>(value, key);
    else if (key == "lambda2") c.lambda2 = parse_num<float>(value, key);
    else if (key == "seed") c.seed = parse_num<uint64_t>(value, key);
    else if (key == "replay_buffer") c.replay_buffer = parse_num<int>(value, key);
    else if (key == "prior_weighting") c.prior_weighting = prior_weighting_from_string(value);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_num<int>(value, key);
    else if (key == "adam_beta1") c.adam_beta1 = parse_num<float>(value, key);
    else if (key == "adam_beta2") c.adam_beta2 = parse_num<float>(value, key);
    else if (key == "coarse_to_fine") c.coarse_to_fine = parse_bool(value, key);
    else if (key == "long_range_residual") c.long_range_residual = parse_bool(value, key);
    else if (key == "upsample") c.upsample = upsample_from_string(value);
    else if (key == "use_pgcyc") c.use_pgcyc = parse_bool(value, key);
    else if (key == "use_prior_gan") c.use_prior_gan = parse_bool(value, key);
    else if (key == "dy_kind") {
        if (value == "pixel") c.dy_kind = Role::kDiscPixel;
        else if (value == "patch") c.dy_kind = Role::kDiscPatch;
        else throw UserError("config: dy_kind must be pixel or patch");
    }
    else if (key == "per_stage_weights") c.per_stage_weights = parse_bool(value, key);
    else if (key == "perceptual_seed") c.perceptual_seed = parse_num<uint64_t>(value, key);
    else if (key == "vgg_weights") c.vgg_weights = value;
    else if (key == "max_iterations") c.max_iterations = parse_num<long>(value, key);
    else if (key == "log_every") c.log_every = parse_num<int>(value, key);
    else throw UserError("config: unknown key '" + key + "'");
}

TrainConfig parse_config_file(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in)
        throw UserError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#')
            continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw UserError("config " + path + ":" + std::to_string(lineno) +
                            ": expected key = value");
        apply_config_entry(base, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return base;
}

std::map<std::string, std::string> config_to_map(const TrainConfig& c) {
    std::map<std::string, std::string> m;
    auto num = [](auto v) {
        std::ostringstream ss;
        ss.precision(9);
        ss << v;
        return ss.str();
    };
    m["lr"] = num(c.lr);
    m["batch_size"] = num(c.batch_size);
    m["epochs"] = num(c.epochs);
    m["resize_to"] = num(c.resize_to);
    m["crop_to"] = num(c.crop_to);
    m["lambda1"] = num(c.lambda1);
    m["lambda2"] = num(c.lambda2);
    m["seed"] = num(c.seed);
    m["replay_buffer"] = num(c.replay_buffer);
    m["prior_weighting"] = to_string(c.prior_weighting);
    m["checkpoint_every"] = num(c.checkpoint_every);
    m["adam_beta1"] = num(c.adam_beta1);
    m["adam_beta2"] = num(c.adam_beta2);
    m["coarse_to_fine"] = c.coarse_to_fine ? "true" : "false";
    m["long_range_residual"] = c.long_range_residual ? "true" : "false";
    m["upsample"] = upsample_to_string(c.upsample);
    m["use_pgcyc"] = c.use_pgcyc ? "true" : "false";
    m["use_prior_gan"] = c.use_prior_gan ? "true" : "false";
    m["dy_kind"] = c.dy_kind == Role::kDiscPixel ? "pixel" : "patch";
    m["per_stage_weights"] = c.per_stage_weights ? "true" : "false";
    m["perceptual_seed"] = num(c.perceptual_seed);
    m["vgg_weights"] = c.vgg_weights;
    m["max_iterations"] = num(c.max_iterations);
    m["log_every"] = num(c.log_every);
    return m;
}

double lr_at(const TrainConfig& config, int epoch) {
    if (epoch < 0 || epoch > config.epochs)
        throw Error("lr_at: epoch " + std::to_string(epoch) + " out of [0, " +
                    std::to_string(config.epochs) + "]");
    // Exact at the schedule's anchor points; cos(pi/2) and cos(pi) would
    // otherwise carry the rounding of the irrational argument.
    if (epoch == 0)
        return static_cast<double>(config.lr);
    if (epoch == config.epochs)
        return 0.0;
    if (2 * epoch == config.epochs)
        return static_cast<double>(config.lr) * 0.5;
    double r = static_cast<double>(epoch) / config.epochs;
    return static_cast<double>(config.lr) * (1.0 + std::cos(M_PI * r)) / 2.0;
}

} // namespace defog
