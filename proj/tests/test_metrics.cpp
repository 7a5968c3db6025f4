#include <doctest.h>

#include <cmath>

#include "cxr/error.hpp"
#include "cxr/metrics.hpp"
#include "cxr/rng.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace cxr;

TEST_SUITE("metrics") {

TEST_CASE("perfect separation yields the three-point staircase") {
  RocCurve c = roc_curve({0.9, 0.1}, {1, 0});
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0].fpr == 0.0);
  CHECK(c.points[0].tpr == 0.0);
  CHECK(c.points[1].fpr == 0.0);
  CHECK(c.points[1].tpr == 1.0);
  CHECK(c.points[2].fpr == 1.0);
  CHECK(c.points[2].tpr == 1.0);
  CHECK(auc(c) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("all-equal scores collapse to the diagonal") {
  RocCurve c = roc_curve({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0});
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[1].fpr == 1.0);
  CHECK(c.points[1].tpr == 1.0);
  CHECK(auc(c) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("single-class inputs are rejected") {
  CHECK_THROWS_WITH_AS(roc_curve({0.4, 0.6}, {1, 1}),
                       doctest::Contains("without both classes"), ValueError);
  CHECK_THROWS_AS(roc_curve({0.4, 0.6}, {0, 0}), ValueError);
}

TEST_CASE("fixed example: concordance 3 of 4 gives 0.75") {
  RocCurve c = roc_curve({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0});
  CHECK(auc(c) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(oracle::auc_concordance_ref({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0}) == 0.75);
}

TEST_CASE("curve coordinates match a per-threshold confusion recount") {
  RandomStream rng(3);
  std::vector<double> scores(50);
  std::vector<int> labels(50);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.bounded(10) / 10.0;  // plenty of ties
    labels[i] = rng.uniform() < 0.4;
  }
  if (std::count(labels.begin(), labels.end(), 1) == 0) labels[0] = 1;
  if (std::count(labels.begin(), labels.end(), 0) == 0) labels[1] = 0;

  RocCurve c = roc_curve(scores, labels);
  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end(), std::greater<>());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  // skip the (0,0) anchor, then one point per distinct threshold
  std::size_t pi = 1;
  for (double t : distinct) {
    const auto [fpr, tpr] = oracle::roc_point_ref(scores, labels, t);
    if (pi < c.points.size() &&
        (std::fabs(c.points[pi].fpr - fpr) < 1e-12 && std::fabs(c.points[pi].tpr - tpr) < 1e-12)) {
      ++pi;
    } else {
      // merged duplicate; must equal the previous point
      CHECK(std::fabs(c.points[pi - 1].fpr - fpr) < 1e-12);
      CHECK(std::fabs(c.points[pi - 1].tpr - tpr) < 1e-12);
    }
  }
}

TEST_CASE("trapezoidal auc equals pairwise concordance on random inputs") {
  RandomStream rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.bounded(199);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.bounded(20) / 20.0;
      labels[i] = rng.uniform() < 0.5;
    }
    if (std::count(labels.begin(), labels.end(), 1) == 0) labels[0] = 1;
    if (std::count(labels.begin(), labels.end(), 0) == 0) labels[n - 1] = 0;
    const double area = auc(roc_curve(scores, labels));
    const double ref = oracle::auc_concordance_ref(scores, labels);
    CHECK(area == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  RandomStream rng(7);
  std::vector<double> scores(40);
  std::vector<int> labels(40);
  for (std::size_t i = 0; i < 40; ++i) {
    scores[i] = rng.normal();
    labels[i] = rng.uniform() < 0.5;
  }
  labels[0] = 1;
  labels[1] = 0;
  std::vector<double> warped(40);
  for (std::size_t i = 0; i < 40; ++i) warped[i] = std::exp(3.0 * scores[i]) + 7.0;
  CHECK(auc(roc_curve(scores, labels)) ==
        doctest::Approx(auc(roc_curve(warped, labels))).epsilon(1e-12));
}

TEST_CASE("negating tie-free scores complements the auc") {
  RandomStream rng(9);
  std::vector<double> scores(30);
  std::vector<int> labels(30);
  for (std::size_t i = 0; i < 30; ++i) {
    scores[i] = rng.normal();  // ties have probability zero
    labels[i] = rng.uniform() < 0.5;
  }
  labels[0] = 1;
  labels[1] = 0;
  std::vector<double> negated(30);
  for (std::size_t i = 0; i < 30; ++i) negated[i] = -scores[i];
  CHECK(auc(roc_curve(scores, labels)) + auc(roc_curve(negated, labels)) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("roc curve coordinates are monotone and in range") {
  RandomStream rng(11);
  std::vector<double> scores(64);
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < 64; ++i) {
    scores[i] = rng.bounded(8) / 8.0;
    labels[i] = rng.uniform() < 0.5;
  }
  labels[0] = 1;
  labels[1] = 0;
  RocCurve c = roc_curve(scores, labels);
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    CHECK(c.points[i].fpr >= 0.0);
    CHECK(c.points[i].tpr <= 1.0);
    if (i > 0) {
      CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
      CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    }
  }
}

TEST_CASE("perfect predictions give all-ones rates") {
  Tensor labels({4, 3});
  RandomStream rng(13);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  labels.at2(0, 0) = 1.0;  // ensure every label has a positive
  labels.at2(1, 1) = 1.0;
  labels.at2(2, 2) = 1.0;
  labels.at2(3, 0) = 0.0;  // and a negative
  labels.at2(3, 1) = 0.0;
  labels.at2(3, 2) = 0.0;
  Tensor probs = labels;  // oracle model emits the truth
  MetricsReport r = classification_report(probs, labels, 0.5, {"a", "b", "c"});
  CHECK(r.accuracy == 1.0);
  for (const LabelMetrics& lm : r.per_label) {
    CHECK(lm.precision == 1.0);
    CHECK(lm.recall == 1.0);
    CHECK(lm.f1 == 1.0);
    REQUIRE(lm.auc.has_value());
    CHECK(*lm.auc == 1.0);
  }
}

TEST_CASE("zero-denominator convention reports 0 with a flag") {
  Tensor probs({2, 1}, {0.1, 0.2});   // nothing predicted positive
  Tensor labels({2, 1}, {1.0, 0.0});  // but positives exist
  MetricsReport r = classification_report(probs, labels, 0.5, {"x"});
  CHECK(r.per_label[0].precision == 0.0);
  CHECK(r.per_label[0].precision_undefined);
  CHECK(r.per_label[0].recall == 0.0);
  CHECK(!r.per_label[0].recall_undefined);  // denominator tp+fn = 1
  const std::string text = report_text(r);
  CHECK(text.find("zero-denominator") != std::string::npos);
}

TEST_CASE("report counts match a brute-force tally") {
  RandomStream rng(17);
  Tensor probs = testutil::uniform_tensor({32, 14}, rng);
  Tensor labels({32, 14});
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  MetricsReport r = classification_report(probs, labels, 0.5, {});

  std::size_t total_counts = 0;
  for (std::size_t c = 0; c < 14; ++c) {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t b = 0; b < 32; ++b) {
      const bool pred = probs.at2(b, c) >= 0.5;
      const bool pos = labels.at2(b, c) != 0.0;
      tp += pred && pos;
      fp += pred && !pos;
      fn += !pred && pos;
      tn += !pred && !pos;
    }
    CHECK(r.per_label[c].counts.tp == tp);
    CHECK(r.per_label[c].counts.fp == fp);
    CHECK(r.per_label[c].counts.tn == tn);
    CHECK(r.per_label[c].counts.fn == fn);
    total_counts += tp + fp + tn + fn;
  }
  CHECK(total_counts == 32 * 14);

  // micro aggregates recompute from summed counts
  std::size_t stp = 0, sfp = 0, sfn = 0;
  for (const auto& lm : r.per_label) {
    stp += lm.counts.tp;
    sfp += lm.counts.fp;
    sfn += lm.counts.fn;
  }
  CHECK(r.micro_precision == doctest::Approx(double(stp) / (stp + sfp)).epsilon(1e-12));
  CHECK(r.micro_recall == doctest::Approx(double(stp) / (stp + sfn)).epsilon(1e-12));
}

TEST_CASE("micro f1 equals the per-label f1 when C is 1") {
  RandomStream rng(19);
  Tensor probs = testutil::uniform_tensor({40, 1}, rng);
  Tensor labels({40, 1});
  for (std::size_t i = 0; i < 40; ++i) labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  labels[0] = 1.0;
  labels[1] = 0.0;
  MetricsReport r = classification_report(probs, labels, 0.5, {"only"});
  CHECK(r.micro_f1 == doctest::Approx(r.per_label[0].f1).epsilon(1e-12));
}

TEST_CASE("single-class labels are excluded from mean auc and listed") {
  Tensor probs({3, 2}, {0.9, 0.4, 0.2, 0.6, 0.7, 0.5});
  Tensor labels({3, 2}, {1, 1, 0, 1, 1, 1});  // second label all positive
  MetricsReport r = classification_report(probs, labels, 0.5, {"first", "second"});
  CHECK(!r.per_label[1].auc.has_value());
  REQUIRE(r.auc_excluded.size() == 1);
  CHECK(r.auc_excluded[0] == "second");
  REQUIRE(r.mean_auc.has_value());
  CHECK(*r.mean_auc == *r.per_label[0].auc);
}

TEST_CASE("rates stay within [0,1] on random reports") {
  RandomStream rng(23);
  Tensor probs = testutil::uniform_tensor({20, 5}, rng);
  Tensor labels({20, 5});
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  MetricsReport r = classification_report(probs, labels, 0.5, {});
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  CHECK(in01(r.accuracy));
  CHECK(in01(r.macro_precision));
  CHECK(in01(r.micro_f1));
  for (const auto& lm : r.per_label) {
    CHECK(in01(lm.precision));
    CHECK(in01(lm.recall));
    CHECK(in01(lm.f1));
    if (lm.auc) CHECK(in01(*lm.auc));
  }
}

TEST_CASE("report serializations carry the threshold and shape errors throw") {
  Tensor probs({2, 1}, {0.9, 0.1});
  Tensor labels({2, 1}, {1.0, 0.0});
  MetricsReport r = classification_report(probs, labels, 0.25, {"x"});
  CHECK(report_csv(r).find("__threshold__,,0.25") != std::string::npos);
  CHECK(report_text(r).find("0.25") != std::string::npos);
  CHECK_THROWS_AS(classification_report(probs, Tensor({3, 1}), 0.5, {}), ShapeError);
  CHECK_THROWS_AS(classification_report(probs, labels, 0.0, {}), ValueError);
}

TEST_CASE("roc exports parse as csv and svg") {
  RocCurve c = roc_curve({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0});
  const std::string csv = roc_csv(c);
  CHECK(csv.rfind("fpr,tpr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(c.points.size()));

  const std::string svg = roc_svg(c, "ROC: test");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("viewBox=\"0 0 640 480\"") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

}  // TEST_SUITE
