#include "gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace stunet::testkit {

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Triple random_triple(Rng& rng, int lo, int hi) {
  return {uniform_int(rng, lo, hi), uniform_int(rng, lo, hi), uniform_int(rng, lo, hi)};
}

// Values bounded away from zero, for ops with a kink at the origin.
Tensor64 away_from_zero(const Shape& shape, Rng& rng) {
  Tensor64 t = random_tensor(shape, rng, 0.05, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.data()) {
    if (flip(rng)) v = -v;
  }
  return t;
}

std::string describe_shape(const Shape& s) { return shape_to_string(s); }

// sum(out * R) for a fixed random R, so every output element gets a distinct weight.
ad::Var<double> weighted_sum(ad::Tape<double>& tape, const ad::Var<double>& out, const Tensor64& r) {
  return ad::sum(tape, ad::mul(tape, out, tape.constant(r)));
}

double eval_loss(const GradCase& c, const std::map<std::string, Tensor64>& inputs) {
  ad::Tape<double> tape(false);
  VarMap vars;
  for (const auto& [name, t] : inputs) vars[name] = tape.parameter(name, t);
  return c.loss(tape, vars).value()[0];
}

Shape random_volume_shape(Rng& rng, int max_c, int lo, int hi) {
  return {uniform_int(rng, 1, 2), uniform_int(rng, 1, max_c), uniform_int(rng, lo, hi), uniform_int(rng, lo, hi),
          uniform_int(rng, lo, hi)};
}

GradCase conv_case(Rng& rng) {
  const Triple k = random_triple(rng, 1, 3);
  const Triple s = random_triple(rng, 1, 2);
  Triple p;
  Shape xs{uniform_int(rng, 1, 2), uniform_int(rng, 1, 3), 0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    p[a] = uniform_int(rng, 0, k[a] / 2 + 1);
    xs[2 + a] = uniform_int(rng, std::max(1, k[a] - 2 * p[a]), k[a] + 2);
  }
  const int64_t co = uniform_int(rng, 1, 3);
  const Shape ws{co, xs[1], k[0], k[1], k[2]};
  const bool bias = uniform_int(rng, 0, 1) == 1;
  GradCase c;
  c.op = "conv3d";
  c.inputs["x"] = random_tensor(xs, rng);
  c.inputs["w"] = random_tensor(ws, rng);
  if (bias) c.inputs["b"] = random_tensor({co}, rng);
  Shape ys{xs[0], co, 0, 0, 0};
  for (int a = 0; a < 3; ++a) ys[2 + a] = kernels::conv_out_extent(int(xs[2 + a]), k[a], s[a], p[a]);
  const Tensor64 r = random_tensor(ys, rng);
  std::ostringstream os;
  os << "x" << describe_shape(xs) << " w" << describe_shape(ws) << " s" << to_string(s) << " p" << to_string(p)
     << (bias ? " bias" : "");
  c.shape = os.str();
  c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
    const ad::Var<double>* b = v.count("b") ? &v.at("b") : nullptr;
    return weighted_sum(tape, ad::conv3d(tape, v.at("x"), v.at("w"), b, s, p), r);
  };
  return c;
}

GradCase transpose_case(Rng& rng) {
  const Triple s = random_triple(rng, 1, 2);
  const Shape xs = random_volume_shape(rng, 3, 1, 3);
  const int64_t co = uniform_int(rng, 1, 3);
  const Shape ws{xs[1], co, s[0], s[1], s[2]};
  const bool bias = uniform_int(rng, 0, 1) == 1;
  GradCase c;
  c.op = "transpose_conv3d";
  c.inputs["x"] = random_tensor(xs, rng);
  c.inputs["w"] = random_tensor(ws, rng);
  if (bias) c.inputs["b"] = random_tensor({co}, rng);
  const Tensor64 r = random_tensor({xs[0], co, xs[2] * s[0], xs[3] * s[1], xs[4] * s[2]}, rng);
  c.shape = "x" + describe_shape(xs) + " w" + describe_shape(ws) + (bias ? " bias" : "");
  c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
    const ad::Var<double>* b = v.count("b") ? &v.at("b") : nullptr;
    return weighted_sum(tape, ad::transpose_conv3d(tape, v.at("x"), v.at("w"), b, s), r);
  };
  return c;
}

GradCase norm_case(Rng& rng) {
  Shape xs = random_volume_shape(rng, 3, 1, 4);
  if (xs[2] * xs[3] * xs[4] < 4) xs[4] = 4;
  GradCase c;
  c.op = "instance_norm";
  c.inputs["x"] = random_tensor(xs, rng);
  c.inputs["gamma"] = random_tensor({xs[1]}, rng, 0.5, 1.5);
  c.inputs["beta"] = random_tensor({xs[1]}, rng);
  const Tensor64 r = random_tensor(xs, rng);
  c.shape = "x" + describe_shape(xs);
  c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
    return weighted_sum(tape, ad::instance_norm(tape, v.at("x"), v.at("gamma"), v.at("beta")), r);
  };
  return c;
}

GradCase unary_case(const std::string& op, Rng& rng) {
  const Shape xs = random_volume_shape(rng, 3, 1, 4);
  GradCase c;
  c.op = op;
  c.shape = "x" + describe_shape(xs);
  if (op == "leaky_relu") {
    c.inputs["x"] = away_from_zero(xs, rng);
    const double slope = std::uniform_real_distribution<double>(0.0, 0.3)(rng);
    const Tensor64 r = random_tensor(xs, rng);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
      return weighted_sum(tape, ad::leaky_relu(tape, v.at("x"), slope), r);
    };
  } else if (op == "scale") {
    c.inputs["x"] = random_tensor(xs, rng);
    const double f = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    const Tensor64 r = random_tensor(xs, rng);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) { return weighted_sum(tape, ad::scale(tape, v.at("x"), f), r); };
  } else if (op == "sum") {
    c.inputs["x"] = random_tensor(xs, rng);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
      return ad::scale(tape, ad::sum(tape, v.at("x")), 1.7);
    };
  } else if (op == "softmax_channels") {
    c.inputs["x"] = random_tensor(xs, rng, -2.0, 2.0);
    const Tensor64 r = random_tensor(xs, rng);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
      return weighted_sum(tape, ad::softmax_channels(tape, v.at("x")), r);
    };
  }
  return c;
}

GradCase binary_case(const std::string& op, Rng& rng) {
  const Shape xs = random_volume_shape(rng, 3, 1, 4);
  GradCase c;
  c.op = op;
  c.inputs["a"] = random_tensor(xs, rng);
  if (op == "concat_channels") {
    Shape bs = xs;
    bs[1] = uniform_int(rng, 1, 3);
    c.inputs["b"] = random_tensor(bs, rng);
    Shape ys = xs;
    ys[1] += bs[1];
    const Tensor64 r = random_tensor(ys, rng);
    c.shape = "a" + describe_shape(xs) + " b" + describe_shape(bs);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
      return weighted_sum(tape, ad::concat_channels(tape, v.at("a"), v.at("b")), r);
    };
    return c;
  }
  c.inputs["b"] = random_tensor(xs, rng);
  const Tensor64 r = random_tensor(xs, rng);
  c.shape = "a, b" + describe_shape(xs);
  const bool is_add = op == "add";
  c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
    auto y = is_add ? ad::add(tape, v.at("a"), v.at("b")) : ad::mul(tape, v.at("a"), v.at("b"));
    return weighted_sum(tape, y, r);
  };
  return c;
}

GradCase upsample_case(const std::string& op, Rng& rng) {
  const Shape xs = random_volume_shape(rng, 3, 1, 3);
  Triple f = random_triple(rng, 1, 2);
  if (f == Triple{1, 1, 1}) f[uniform_int(rng, 0, 2)] = 2;
  GradCase c;
  c.op = op;
  c.inputs["x"] = random_tensor(xs, rng);
  const Tensor64 r = random_tensor({xs[0], xs[1], xs[2] * f[0], xs[3] * f[1], xs[4] * f[2]}, rng);
  c.shape = "x" + describe_shape(xs) + " f" + to_string(f);
  const bool nearest = op == "upsample_nearest";
  c.loss = [=](ad::Tape<double>& tape, VarMap& v) {
    auto y = nearest ? ad::upsample_nearest(tape, v.at("x"), f) : ad::upsample_trilinear(tape, v.at("x"), f);
    return weighted_sum(tape, y, r);
  };
  return c;
}

std::vector<int32_t> random_labels(const Shape& logits, Rng& rng) {
  std::vector<int32_t> labels(static_cast<size_t>(logits[0] * logits[2] * logits[3] * logits[4]));
  for (auto& l : labels) l = uniform_int(rng, 0, int(logits[1]) - 1);
  return labels;
}

GradCase loss_case(const std::string& op, Rng& rng) {
  Shape xs = random_volume_shape(rng, 4, 1, 4);
  xs[1] = std::max<int64_t>(xs[1], 2);
  const auto labels = random_labels(xs, rng);
  GradCase c;
  c.op = op;
  c.shape = "logits" + describe_shape(xs);
  if (op == "soft_dice_loss") {
    c.inputs["p"] = random_tensor(xs, rng, 0.05, 1.0);
    const Tensor64 onehot = kernels::one_hot<double>(labels, xs);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) { return ad::soft_dice_loss(tape, v.at("p"), onehot); };
  } else if (op == "cross_entropy") {
    c.inputs["x"] = random_tensor(xs, rng, -2.0, 2.0);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) { return ad::cross_entropy(tape, v.at("x"), labels); };
  } else {
    c.inputs["x"] = random_tensor(xs, rng, -2.0, 2.0);
    c.loss = [=](ad::Tape<double>& tape, VarMap& v) { return ad::dice_ce_loss(tape, v.at("x"), labels); };
  }
  return c;
}

double norm(const Tensor64& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

Tensor64 random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor64 t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

const std::vector<std::string>& differentiable_ops() {
  static const std::vector<std::string> ops{
      "conv3d",           "transpose_conv3d", "instance_norm",      "leaky_relu",     "add",
      "mul",              "scale",            "sum",                "upsample_nearest", "upsample_trilinear",
      "concat_channels",  "softmax_channels", "soft_dice_loss",     "cross_entropy",  "dice_ce_loss"};
  return ops;
}

std::vector<GradCase> gradient_cases(const std::string& op, int count, Rng& rng) {
  std::vector<GradCase> out;
  for (int i = 0; i < count; ++i) {
    if (op == "conv3d") out.push_back(conv_case(rng));
    else if (op == "transpose_conv3d") out.push_back(transpose_case(rng));
    else if (op == "instance_norm") out.push_back(norm_case(rng));
    else if (op == "leaky_relu" || op == "scale" || op == "sum" || op == "softmax_channels")
      out.push_back(unary_case(op, rng));
    else if (op == "add" || op == "mul" || op == "concat_channels") out.push_back(binary_case(op, rng));
    else if (op == "upsample_nearest" || op == "upsample_trilinear") out.push_back(upsample_case(op, rng));
    else if (op == "soft_dice_loss" || op == "cross_entropy" || op == "dice_ce_loss") out.push_back(loss_case(op, rng));
    else throw std::invalid_argument("no gradient cases for op '" + op + "'");
  }
  return out;
}

GradReport check_gradients(const GradCase& c, double h) {
  ad::Tape<double> tape;
  VarMap vars;
  for (const auto& [name, t] : c.inputs) vars[name] = tape.parameter(name, t);
  const auto grads = tape.backward(c.loss(tape, vars));

  GradReport report{c.op, c.shape, 0.0, ""};
  auto inputs = c.inputs;
  for (const auto& [name, original] : c.inputs) {
    Tensor64 numeric(original.shape());
    Tensor64& probe = inputs.at(name);
    for (int64_t i = 0; i < original.numel(); ++i) {
      probe[i] = original[i] + h;
      const double up = eval_loss(c, inputs);
      probe[i] = original[i] - h;
      const double down = eval_loss(c, inputs);
      probe[i] = original[i];
      numeric[i] = (up - down) / (2.0 * h);
    }
    const Tensor64& analytic = grads.at(name);
    Tensor64 diff(original.shape());
    for (int64_t i = 0; i < diff.numel(); ++i) diff[i] = analytic[i] - numeric[i];
    const double rel = norm(diff) / std::max({norm(analytic), norm(numeric), 1e-12});
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_input = name;
    }
  }
  return report;
}

template <class T>
BasicTensor<T> naive_conv3d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                            Triple stride, Triple pad) {
  const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int64_t O = w.dim(0);
  const int64_t od = kernels::conv_out_extent(int(D), int(w.dim(2)), stride[0], pad[0]);
  const int64_t oh = kernels::conv_out_extent(int(H), int(w.dim(3)), stride[1], pad[1]);
  const int64_t ow = kernels::conv_out_extent(int(W), int(w.dim(4)), stride[2], pad[2]);
  BasicTensor<T> y({N, O, od, oh, ow});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t z = 0; z < od; ++z)
        for (int64_t yy = 0; yy < oh; ++yy)
          for (int64_t xx = 0; xx < ow; ++xx) {
            double acc = bias && !bias->empty() ? (*bias)[o] : 0.0;
            for (int64_t c = 0; c < C; ++c)
              for (int64_t a = 0; a < w.dim(2); ++a)
                for (int64_t b = 0; b < w.dim(3); ++b)
                  for (int64_t e = 0; e < w.dim(4); ++e) {
                    const int64_t iz = z * stride[0] - pad[0] + a;
                    const int64_t iy = yy * stride[1] - pad[1] + b;
                    const int64_t ix = xx * stride[2] - pad[2] + e;
                    if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                    acc += static_cast<double>(x.at(n, c, iz, iy, ix)) * w.at(o, c, a, b, e);
                  }
            y.at(n, o, z, yy, xx) = static_cast<T>(acc);
          }
  return y;
}

template Tensor naive_conv3d(const Tensor&, const Tensor&, const Tensor*, Triple, Triple);
template Tensor64 naive_conv3d(const Tensor64&, const Tensor64&, const Tensor64*, Triple, Triple);

}  // namespace stunet::testkit
