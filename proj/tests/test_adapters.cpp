#include <doctest.h>

#include <cmath>

#include "complora/adapters.hpp"
#include "complora/errors.hpp"
#include "complora/subspace.hpp"
#include "oracles.hpp"

using namespace complora;

namespace {

CompLoraAdapter trained_comp(const SubspaceSplit& s, std::size_t r, RandomSource& rng) {
    CompLoraAdapter ad = init_comp(s, r, 0.7, rng);
    ad.b = rng.gaussian(ad.b.rows(), ad.b.cols(), 1.0);
    return ad;
}

}  // namespace

TEST_SUITE("adapters") {
    TEST_CASE("init shapes, zero b and scale of a") {
        RandomSource rng(1);
        const SubspaceSplit s = split_weight(rng.gaussian(64, 64, 1.0), 4);
        const CompLoraAdapter c = init_comp(s, 2, 1.0, rng);
        CHECK(c.rank() == 2);
        CHECK(c.comp_dim() == 60);
        CHECK(max_abs(c.b) == 0.0);
        CHECK(c.b.rows() == 60);
        const LoraAdapter l = init_lora(64, 32, 3, 1.0, rng);
        CHECK(l.a.rows() == 3);
        CHECK(l.a.cols() == 64);
        CHECK(l.b.rows() == 32);
        CHECK(max_abs(l.b) == 0.0);

        RandomSource big(2);
        const CompLoraAdapter wide = init_comp(split_weight(big.gaussian(64, 64, 1.0), 0), 32, 1.0, big);
        double sq = 0.0;
        for (double v : wide.a.data()) sq += v * v;
        CHECK(sq / static_cast<double>(wide.a.size()) == doctest::Approx(1.0 / 64).epsilon(0.1));
    }

    TEST_CASE("init rejects rank above c, zero rank and non-positive eta") {
        RandomSource rng(3);
        const SubspaceSplit s = split_weight(rng.gaussian(8, 8, 1.0), 6);
        CHECK_NOTHROW(init_comp(s, 2, 1.0, rng));
        CHECK_THROWS_AS(init_comp(s, 3, 1.0, rng), RangeError);
        CHECK_THROWS_AS(init_comp(s, 0, 1.0, rng), RangeError);
        CHECK_THROWS_AS(init_comp(s, 1, 0.0, rng), RangeError);
    }

    TEST_CASE("effective delta matches the explicit product and has rank <= r") {
        RandomSource rng(4);
        const SubspaceSplit s = split_weight(rng.gaussian(10, 9, 1.0), 3);
        const CompLoraAdapter ad = trained_comp(s, 2, rng);
        const Matrix expected = oracle::naive_matmul(
            oracle::naive_matmul(oracle::naive_matmul(ad.proj_out, ad.b), ad.a), ad.proj_in) * 0.7;
        const Matrix delta = effective_delta(ad);
        CHECK(max_abs_diff(delta, expected) < 1e-13);
        CHECK(numerical_rank(delta, 1e-9) == 2);
    }

    TEST_CASE("update annihilates principal singular directions on both sides") {
        RandomSource rng(5);
        const SubspaceSplit s = split_weight(rng.gaussian(12, 12, 1.0), 4);
        const Matrix delta = effective_delta(trained_comp(s, 2, rng));
        const double tol = 1e-12 * frobenius_norm(delta);
        CHECK(max_abs(oracle::naive_matmul(oracle::naive_transpose(s.u_p), delta)) < tol);
        CHECK(max_abs(oracle::naive_matmul(delta, s.v_p)) < tol);
    }

    TEST_CASE("zero-initialized adapters leave the forward pass unchanged") {
        RandomSource rng(6);
        const Matrix w = rng.gaussian(5, 7, 1.0);
        const std::vector<double> bias{1, 2, 3, 4, 5};
        const Matrix x = rng.gaussian(7, 3, 1.0);
        const Matrix plain = forward(w, bias, std::monostate{}, x);
        CHECK(max_abs_diff(forward(w, bias, init_lora(7, 5, 2, 1.0, rng), x), plain) == 0.0);
        CHECK(max_abs_diff(forward(w, bias, init_comp(split_weight(w, 2), 2, 1.0, rng), x), plain) == 0.0);
        CHECK(max_abs_diff(plain, oracle::naive_matmul(w, x) + [&] {
                  Matrix b(5, 3);
                  for (std::size_t i = 0; i < 5; ++i)
                      for (std::size_t j = 0; j < 3; ++j) b(i, j) = bias[i];
                  return b;
              }()) < 1e-13);
    }

    TEST_CASE("merged weights reproduce the adapted forward pass") {
        RandomSource rng(7);
        const Matrix w = rng.gaussian(6, 6, 1.0);
        const Adapter ad = trained_comp(split_weight(w, 2), 2, rng);
        const Matrix x = rng.gaussian(6, 4, 1.0);
        CHECK(max_abs_diff(forward(w, {}, ad, x), forward(merge(w, ad), {}, std::monostate{}, x)) < 1e-12);
    }

    TEST_CASE("shape mismatch is a ShapeError") {
        RandomSource rng(8);
        const Matrix w = rng.gaussian(6, 6, 1.0);
        const Adapter ad = init_lora(5, 6, 2, 1.0, rng);
        CHECK_THROWS_AS(merge(w, ad), ShapeError);
        CHECK_THROWS_AS(forward(w, {}, std::monostate{}, Matrix(5, 2)), ShapeError);
    }

    TEST_CASE("parameter accounting: 2rc learnable against 2rd") {
        RandomSource rng(9);
        const SubspaceSplit s = split_weight(rng.gaussian(64, 64, 1.0), 4);
        CHECK(param_count(init_comp(s, 2, 1.0, rng)) == ParamCount{2 * 2 * 60, 2 * 60 * 64});
        CHECK(param_count(init_lora(64, 64, 2, 1.0, rng)).learnable == 2 * 2 * 64);
        CHECK(param_count(std::monostate{}).learnable == 0);
    }

    TEST_CASE("method and projection names round-trip") {
        CHECK(parse_method(to_string(Method::lora)) == Method::lora);
        CHECK(parse_method(to_string(Method::comp_lora)) == Method::comp_lora);
        CHECK(parse_method("comp-lora") == Method::comp_lora);
        CHECK_THROWS_AS(parse_method("dora"), RangeError);
        CHECK(AdapterPlacement::qkv(2).selected_count() == 6);
        CHECK(AdapterPlacement::all(3).selected_count() == 12);
        CHECK_FALSE(AdapterPlacement::qkv(2).selects(0, Projection::output));
    }
}
