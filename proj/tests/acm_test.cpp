#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "mlcl/acm.hpp"
#include "mlcl/errors.hpp"
#include "mlcl/random.hpp"
#include "mlcl/stream.hpp"

using namespace mlcl;

namespace {

Matrix rows_of(std::vector<std::vector<double>> rows) {
  Matrix out(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) out(r, c) = rows[r][c];
  }
  return out;
}

Matrix random_labels(std::size_t n, std::size_t width, double p, Rng& rng) {
  Matrix out(n, width);
  for (double& v : out.data()) v = rng.uniform() < p ? 1.0 : 0.0;
  return out;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end) {
  Matrix out(end - begin, m.cols());
  for (std::size_t r = begin; r < end; ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(r - begin, c) = m(order[r], c);
  }
  return out;
}

TaskStream small_stream(std::uint64_t seed, std::size_t n = 2000) {
  ChainSpecParams p;
  p.classes = 9;
  p.tasks = 3;
  p.feature_dim = 4;
  p.seed = seed;
  const auto spec = make_chain_spec(p);
  const auto data = generate_synthetic(spec, n, seed);
  return split_into_tasks(data, contiguous_partition(9, 3), Scenario::CL, 0.7, seed);
}

// Counts P(a | b) directly from label sets, one task's data per block.
Matrix brute_force_oracle(const TaskStream& s, std::size_t t) {
  const auto seen = s.seen_classes(t);
  const std::size_t k = seen.size();
  auto owner = [&](std::size_t cls) {
    for (std::size_t tau = 0; tau <= t; ++tau) {
      const auto& cs = s.task(tau).classes;
      if (std::find(cs.begin(), cs.end(), cls) != cs.end()) return tau;
    }
    return t + 1;
  };
  Matrix out(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) {
        out(a, b) = 1.0;
        continue;
      }
      const std::size_t tau = std::max(owner(seen[a]), owner(seen[b]));
      double with_b = 0, with_both = 0;
      for (const auto& ex : s.train(tau)) {
        if (!ex.has_label(seen[b])) continue;
        with_b += 1;
        if (ex.has_label(seen[a])) with_both += 1;
      }
      out(a, b) = with_b == 0 ? 0.0 : with_both / with_b;
    }
  }
  return out;
}

Matrix projected(const Dataset& data, const TaskStream& s, std::size_t t, Scenario mode) {
  const std::size_t width = mode == Scenario::CL ? s.num_seen(t) : s.task(t).classes.size();
  Matrix out(data.size(), width);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto y = project_labels(data[r], s, t, mode);
    for (std::size_t c = 0; c < width; ++c) out(r, c) = y[c];
  }
  return out;
}

// Streams task after task through counters in batches and returns every A^t.
std::vector<ACMatrix> stream_acms(const TaskStream& s, Scenario mode, std::size_t batch,
                                  bool oracle_expert) {
  std::vector<ACMatrix> out;
  for (std::size_t t = 0; t < s.num_tasks(); ++t) {
    const std::size_t m = s.num_old(t), n = s.task(t).classes.size();
    CoocCounters counters(m, n);
    const auto& data = s.train(t);
    const Matrix labels = projected(data, s, t, mode);
    const Matrix full = projected(data, s, t, Scenario::CL);
    for (std::size_t b = 0; b < data.size(); b += batch) {
      const std::size_t e = std::min(data.size(), b + batch);
      std::vector<std::size_t> idx(data.size());
      std::iota(idx.begin(), idx.end(), 0);
      const Matrix y = take_rows(labels, idx, b, e);
      counters.update_hard(y);
      if (mode == Scenario::IL && m > 0 && oracle_expert) {
        const Matrix f = take_rows(full, idx, b, e);
        counters.update_soft(f.slice_cols(0, m), f.slice_cols(m, m + n));
      }
    }
    out.push_back(augment(out.empty() ? nullptr : &out.back(), assemble_blocks(counters, mode), t, mode));
  }
  return out;
}

}  // namespace

TEST(Counters, SinglePair) {
  CoocCounters c(1, 1);
  c.update_hard(rows_of({{1, 1}}));
  EXPECT_EQ(c.pair(0, 0), 1u);
  EXPECT_EQ(c.old_count(0), 1u);
  EXPECT_EQ(c.new_count(0), 1u);
}

TEST(Counters, EmptyBatchIsNoOp) {
  CoocCounters c(2, 3);
  const CoocCounters before = c;
  c.update_hard(Matrix(0, 5));
  c.update_soft(Matrix(0, 2), Matrix(0, 3));
  EXPECT_EQ(c, before);
}

TEST(Counters, AnyBatchPartitionMatchesOfflineCount) {
  Rng rng(3);
  const std::size_t m = 3, n = 4, total = 1000;
  const Matrix y = random_labels(total, m + n, 0.35, rng);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);

  auto count = [&](std::size_t a, std::size_t b) {
    std::uint64_t k = 0;
    for (std::size_t r = 0; r < total; ++r) k += y(r, a) == 1.0 && y(r, b) == 1.0;
    return k;
  };
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(order);
    CoocCounters c(m, n);
    std::size_t pos = 0;
    while (pos < total) {
      const std::size_t len = std::min<std::size_t>(total - pos, 1 + rng.below(40));
      c.update_hard(take_rows(y, order, pos, pos + len));
      pos += len;
    }
    for (std::size_t a = 0; a < m + n; ++a) {
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(c.pair(a, j), count(a, m + j));
    }
    for (std::size_t i = 0; i < m; ++i) EXPECT_EQ(c.old_count(i), count(i, i));
    for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(c.new_count(j), count(m + j, m + j));
  }
}

TEST(Counters, NewOnlyLabelsLeaveOldCountsUntouched) {
  CoocCounters c(2, 2);
  c.update_hard(rows_of({{1, 1}, {0, 1}}));
  EXPECT_EQ(c.old_count(0), 0u);
  EXPECT_EQ(c.pair(2, 1), 1u);
  EXPECT_EQ(c.pair(3, 1), 2u);
  EXPECT_THROW(c.update_hard(Matrix(1, 3)), DimensionError);
}

TEST(Counters, PerfectExpertSoftEqualsHard) {
  Rng rng(5);
  const Matrix y = random_labels(300, 5, 0.4, rng);
  CoocCounters c(2, 3);
  c.update_hard(y);
  c.update_soft(y.slice_cols(0, 2), y.slice_cols(2, 5));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(c.soft_sum(i), static_cast<double>(c.old_count(i)));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c.soft_pair(i, j), static_cast<double>(c.pair(i, j)));
  }
}

TEST(Counters, NullExpertLeavesSoftStateZero) {
  CoocCounters c(2, 2);
  c.update_soft(Matrix(4, 2, 0.0), rows_of({{1, 0}, {1, 1}, {0, 1}, {1, 1}}));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(c.soft_sum(i), 0.0);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(c.soft_pair(i, j), 0.0);
  }
}

TEST(Counters, SoftAccumulationMatchesBruteForce) {
  Rng rng(8);
  const std::size_t m = 4, n = 3, total = 400;
  Matrix z(total, m);
  for (double& v : z.data()) v = rng.uniform();
  const Matrix y = random_labels(total, n, 0.3, rng);
  CoocCounters c(m, n);
  for (std::size_t b = 0; b < total; b += 7) {
    const std::size_t e = std::min(total, b + 7);
    c.update_soft(z.slice_rows(b, e), y.slice_rows(b, e));
  }
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0;
    for (std::size_t r = 0; r < total; ++r) s += z(r, i);
    EXPECT_NEAR(c.soft_sum(i), s, 1e-9);
    for (std::size_t j = 0; j < n; ++j) {
      double mij = 0;
      for (std::size_t r = 0; r < total; ++r) mij += z(r, i) * y(r, j);
      EXPECT_NEAR(c.soft_pair(i, j), mij, 1e-9);
    }
  }
}

TEST(Counters, SoftLabelOutOfRangeIsContractError) {
  CoocCounters c(1, 1);
  EXPECT_THROW(c.update_soft(rows_of({{1.2}}), rows_of({{1}})), ContractError);
  EXPECT_THROW(c.update_soft(rows_of({{-0.1}}), rows_of({{1}})), ContractError);
  EXPECT_THROW(c.update_soft(rows_of({{std::nan("")}}), rows_of({{1}})), ContractError);
}

TEST(Counters, MergeEqualsSequentialUpdates) {
  Rng rng(11);
  const Matrix a = random_labels(50, 5, 0.4, rng), b = random_labels(70, 5, 0.4, rng);
  CoocCounters left(2, 3), right(2, 3), all(2, 3);
  left.update_hard(a);
  right.update_hard(b);
  all.update_hard(a);
  all.update_hard(b);
  left.merge(right);
  EXPECT_EQ(left, all);
}

TEST(Blocks, ContinuousWorkedExample) {
  // N_ij = 5, N_j = 10, N_i = 20.
  CoocCounters c(1, 1);
  for (int k = 0; k < 5; ++k) c.update_hard(rows_of({{1, 1}}));
  for (int k = 0; k < 5; ++k) c.update_hard(rows_of({{0, 1}}));
  for (int k = 0; k < 15; ++k) c.update_hard(rows_of({{1, 0}}));
  const auto blocks = assemble_blocks(c, Scenario::CL);
  EXPECT_DOUBLE_EQ(blocks.R(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(blocks.Q(0, 0), 0.25);
  EXPECT_EQ(blocks.B(0, 0), 1.0);
}

TEST(Blocks, IndependentWorkedExample) {
  // M_ij = 3, N_j = 10, S_i = 6.
  CoocCounters c(1, 1);
  for (int k = 0; k < 10; ++k) {
    c.update_hard(rows_of({{1}}));
    c.update_soft(rows_of({{0.3}}), rows_of({{1}}));
  }
  for (int k = 0; k < 3; ++k) c.update_soft(rows_of({{1.0}}), rows_of({{0}}));
  const auto blocks = assemble_blocks(c, Scenario::IL);
  EXPECT_NEAR(blocks.R(0, 0), 0.3, 1e-15);
  EXPECT_NEAR(blocks.Q(0, 0), 0.3 * 10 / 6, 1e-15);
  EXPECT_NEAR(blocks.Q(0, 0), 0.5, 1e-15);
}

TEST(Blocks, BayesOvershootIsClamped) {
  // R = 0.5, N_j = 10, S_i = 4: raw value 1.25.
  EXPECT_EQ(clamped_ratio(0.5 * 10, 4), 1.0);
  EXPECT_EQ(clamped_ratio(3, 0), 0.0);
  EXPECT_EQ(clamped_ratio(1, 4), 0.25);
}

TEST(Blocks, ZeroDenominatorsGiveZero) {
  const auto blocks = assemble_blocks(CoocCounters(2, 2), Scenario::CL);
  EXPECT_EQ(blocks.R, Matrix(2, 2));
  EXPECT_EQ(blocks.Q, Matrix(2, 2));
  EXPECT_EQ(blocks.B, Matrix::identity(2));
  const auto il = assemble_blocks(CoocCounters(2, 2), Scenario::IL);
  EXPECT_EQ(il.R, Matrix(2, 2));
  EXPECT_EQ(il.Q, Matrix(2, 2));
}

TEST(Augment, FirstTaskIsB) {
  AcmBlocks blocks{rows_of({{1, 0.3}, {0.6, 1}}), Matrix(0, 2), Matrix(2, 0)};
  const auto a = augment(nullptr, blocks, 0, Scenario::CL);
  EXPECT_EQ(a.values, blocks.B);
  EXPECT_EQ(a.boundary, 0u);
}

TEST(Augment, BlockPlacement) {
  ACMatrix prev;
  prev.values = rows_of({{1, 0.1}, {0.2, 1}});
  AcmBlocks blocks{rows_of({{1, 0.7}, {0.8, 1}}), rows_of({{0.3, 0.4}, {0.5, 0.6}}),
                   rows_of({{0.11, 0.12}, {0.13, 0.14}})};
  const auto a = augment(&prev, blocks, 1, Scenario::CL);
  const Matrix expected = rows_of({{1, 0.1, 0.3, 0.4},
                                   {0.2, 1, 0.5, 0.6},
                                   {0.11, 0.12, 1, 0.7},
                                   {0.13, 0.14, 0.8, 1}});
  EXPECT_EQ(a.values, expected);
  EXPECT_EQ(a.boundary, 2u);
}

TEST(Augment, MisshapenBlockIsNamed) {
  ACMatrix prev;
  prev.values = Matrix::identity(2);
  AcmBlocks blocks{Matrix::identity(2), Matrix(2, 3), Matrix(2, 2)};
  try {
    augment(&prev, blocks, 1, Scenario::CL);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("block R"), std::string::npos) << e.what();
  }
  blocks.R = Matrix(2, 2);
  blocks.Q = Matrix(3, 2);
  EXPECT_THROW(augment(&prev, blocks, 1, Scenario::CL), DimensionError);
}

TEST(Augment, NestingRecoversPreviousBlock) {
  const auto s = small_stream(4);
  const auto acms = stream_acms(s, Scenario::CL, 16, false);
  for (std::size_t t = 1; t < acms.size(); ++t) {
    const std::size_t m = acms[t].boundary;
    ASSERT_EQ(m, acms[t - 1].size());
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        EXPECT_EQ(std::memcmp(&acms[t].values(r, c), &acms[t - 1].values(r, c), sizeof(double)), 0);
      }
    }
  }
}

TEST(Normalize, ZeroMatrixGivesIdentity) {
  EXPECT_EQ(normalize_for_gcn(Matrix(3, 3)), Matrix::identity(3));
}

TEST(Normalize, TwoByTwoHandValue) {
  const Matrix a_hat = normalize_for_gcn(rows_of({{0, 1}, {0.5, 0}}));
  // Row sums of A + I are 2 and 1.5.
  EXPECT_DOUBLE_EQ(a_hat(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(a_hat(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(a_hat(1, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a_hat(1, 1), 2.0 / 3.0);
}

TEST(Normalize, RowsSumToOne) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + rng.below(15);
    Matrix a(k, k);
    for (double& v : a.data()) v = rng.uniform();
    const Matrix a_hat = normalize_for_gcn(a);
    for (std::size_t r = 0; r < k; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < k; ++c) s += a_hat(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Normalize, OptionalBinarization) {
  NormalizeOptions opt;
  opt.binarize_threshold = 0.4;
  const Matrix a_hat = normalize_for_gcn(rows_of({{0.9, 0.3}, {0.5, 0.2}}), opt);
  EXPECT_DOUBLE_EQ(a_hat(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(a_hat(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(a_hat(1, 0), 1.0 / 2.2);
  EXPECT_DOUBLE_EQ(a_hat(1, 1), 1.2 / 2.2);
}

TEST(Oracle, ContinuousStreamingEqualsOffline) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = small_stream(seed);
    for (std::size_t batch : {1u, 16u, 1000u}) {
      const auto acms = stream_acms(s, Scenario::CL, batch, false);
      for (std::size_t t = 0; t < acms.size(); ++t) {
        const Matrix oracle = oracle_acm(s, t);
        EXPECT_EQ(acm_distance(acms[t].values, oracle), 0.0);
        EXPECT_EQ(acm_distance(acms[t].values, brute_force_oracle(s, t)), 0.0);
      }
    }
  }
}

TEST(Oracle, PerfectExpertReproducesContinuousBlocks) {
  const auto s = small_stream(6);
  const auto cl = stream_acms(s, Scenario::CL, 16, false);
  const auto il = stream_acms(s, Scenario::IL, 16, true);
  for (std::size_t t = 0; t < cl.size(); ++t) EXPECT_EQ(il[t].values, cl[t].values);
}

TEST(Oracle, EntriesStayInUnitInterval) {
  const auto s = small_stream(7);
  for (const auto& a : stream_acms(s, Scenario::CL, 8, false)) {
    for (double v : a.values.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Distance, IdentityRandomAndMismatch) {
  Rng rng(9);
  Matrix a(4, 4);
  for (double& v : a.data()) v = rng.uniform();
  EXPECT_EQ(acm_distance(a, a), 0.0);
  Matrix b = a;
  b(1, 1) += 5.0;  // diagonal is ignored
  EXPECT_EQ(acm_distance(a, b), 0.0);
  b(0, 1) += 0.3;
  b(2, 3) -= 0.4;
  EXPECT_NEAR(acm_distance(a, b), 0.5, 1e-12);
  EXPECT_THROW(acm_distance(a, Matrix(3, 3)), DimensionError);
}

TEST(Dump, RoundTripIsExact) {
  Rng rng(10);
  ACMatrix a;
  a.values = Matrix(5, 5);
  for (double& v : a.values.data()) v = rng.uniform();
  a.boundary = 3;
  a.task = 1;
  a.mode = Scenario::IL;
  const std::string text = format_acm(a);
  EXPECT_EQ(text.substr(0, text.find('\n')), "t=2 m=3 mode=IL");
  const auto back = parse_acm(text);
  EXPECT_EQ(back.values, a.values);
  EXPECT_EQ(back.boundary, 3u);
  EXPECT_EQ(back.task, 1u);
  EXPECT_EQ(back.mode, Scenario::IL);

  const auto path = std::filesystem::temp_directory_path() / "mlcl_acm_dump_test.csv";
  save_acm(path, a);
  EXPECT_EQ(load_acm(path).values, a.values);
  std::filesystem::remove(path);
}

TEST(Dump, MalformedFilesAreParseErrors) {
  EXPECT_THROW(parse_acm(""), ParseError);
  EXPECT_THROW(parse_acm("t=1 m=0\n1\n"), ParseError);
  EXPECT_THROW(parse_acm("t=1 m=0 mode=XX\n1\n"), ParseError);
  EXPECT_THROW(parse_acm("t=1 m=0 mode=CL\n1,0\n0\n"), ParseError);
  EXPECT_THROW(parse_acm("t=1 m=0 mode=CL\n1,x\n0,1\n"), ParseError);
  EXPECT_THROW(load_acm("/nonexistent/acm.csv"), DataError);
}
