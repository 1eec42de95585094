#include <gtest/gtest.h>

#include <string>

#include "rlr/config.hpp"
#include "rlr/experiments.hpp"

#ifndef RLR_CONFIG_DIR
#define RLR_CONFIG_DIR "configs"
#endif

using namespace rlr;

namespace {

std::vector<ConfigIssue> issues_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigParseError& e) {
    return e.issues();
  }
  return {};
}

bool mentions(const std::vector<ConfigIssue>& issues, int line, const std::string& needle) {
  for (const auto& i : issues)
    if (i.line == line && i.message.find(needle) != std::string::npos) return true;
  return false;
}

const char* kPlan =
    "experiment = plan\n"
    "budget.B = 30\n"
    "budget.B_h = 8\n"
    "budget.B_z = 0.24\n"
    "chain.T = 50\n";

}  // namespace

TEST(Config, EmptyInputReportsMissingExperiment) {
  const auto issues = issues_of("");
  ASSERT_FALSE(issues.empty());
  EXPECT_EQ(issues.front().message, "experiment missing");
  EXPECT_THROW(parse_config("# only a comment\n"), ConfigError);
}

TEST(Config, MinimalPlanConfigGivesHStarTwo) {
  const ExperimentConfig c = parse_config(kPlan);
  EXPECT_EQ(c.experiment, Experiment::Plan);
  EXPECT_EQ(c.chain.T, 50);
  EXPECT_DOUBLE_EQ(c.budget.model.B_z, 0.24);
  const ExperimentResult r = run_experiment(c);
  EXPECT_TRUE(r.passed());
  EXPECT_NE(r.summary().find("h*=2"), std::string::npos);
}

TEST(Config, DuplicateKeyNamesBothLines) {
  const auto issues = issues_of(std::string(kPlan) + "\nchain.T = 40\n");
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 7);
  EXPECT_NE(issues[0].message.find("line 5"), std::string::npos);
  EXPECT_NE(issues[0].message.find("line 7"), std::string::npos);
}

TEST(Config, UnknownKeyAndSection) {
  const auto issues = issues_of(std::string(kPlan) + "chain.colour = red\nfoo.bar = 1\n");
  EXPECT_TRUE(mentions(issues, 6, "unknown key 'chain.colour'"));
  EXPECT_TRUE(mentions(issues, 7, "unknown key 'foo.bar'"));
}

TEST(Config, TypeMismatches) {
  const auto issues = issues_of(
      "experiment = bias\n"
      "chain.T = five\n"
      "chain.sigma = 0.1x\n"
      "chain.time_conditioning = yes\n"
      "chain.backbone = conv\n"
      "run.seeds = 1,,2\n"
      "line without equals\n");
  EXPECT_TRUE(mentions(issues, 2, "integer"));
  EXPECT_TRUE(mentions(issues, 3, "real"));
  EXPECT_TRUE(mentions(issues, 4, "true or false"));
  EXPECT_TRUE(mentions(issues, 5, "mlp-tanh"));
  EXPECT_TRUE(mentions(issues, 6, "empty list element"));
  EXPECT_TRUE(mentions(issues, 7, "key = value"));
}

TEST(Config, MissingSectionForExperiment) {
  const auto issues = issues_of("experiment = train\nchain.T = 5\n");
  EXPECT_TRUE(mentions(issues, 0, "section 'estimator' missing"));
  EXPECT_TRUE(mentions(issues, 0, "section 'run' missing"));
}

TEST(Config, InvariantViolationsCarryLineNumbers) {
  const auto issues = issues_of(
      "experiment = plan\n"
      "chain.T = 50\n"
      "budget.B = 500\n"
      "chain.target = 1, 2, 3\n");
  EXPECT_TRUE(mentions(issues, 3, "B_z*T < B < B_h*T"));
  EXPECT_TRUE(mentions(issues, 4, "chain.d = 2 entries"));
}

TEST(Config, CollectsAllErrors) {
  const auto issues = issues_of(
      "experiment = variance\n"
      "chain.T = 2\n"
      "chain.nope = 1\n"
      "run.batch = 0\n"
      "run.lr = fast\n");
  EXPECT_GE(issues.size(), 4u);
  EXPECT_TRUE(mentions(issues, 2, "at least 3"));
  EXPECT_TRUE(mentions(issues, 3, "unknown key"));
  EXPECT_TRUE(mentions(issues, 4, "at least 1"));
  EXPECT_TRUE(mentions(issues, 5, "real"));
}

TEST(Config, CommentsAndWhitespace) {
  const ExperimentConfig c = parse_config(
      "  # header\n"
      "experiment=variance   # trailing\n"
      "\n"
      "chain.target =  1.5 ,  -2 \n"
      "run.seeds = 3, 4\n");
  ASSERT_EQ(c.chain.target.size(), 2u);
  EXPECT_DOUBLE_EQ(c.chain.target[1], -2.0);
  EXPECT_EQ(c.run.seeds, (std::vector<std::uint64_t>{3, 4}));
}

TEST(Config, AutoHNeedsBudgetAndResolvesToHStar) {
  EXPECT_TRUE(mentions(issues_of("experiment = train\nchain.T = 50\nestimator.h = auto\nrun.batch = 1\n"), 3,
                       "budget"));
  const ExperimentConfig c = parse_config(std::string(kPlan) + "estimator.h = auto\n");
  EXPECT_EQ(resolve_h(c), 2);
}

TEST(Config, FormatRoundTrips) {
  for (const ExperimentConfig& c : {reference_setup(), planner_setup(), long_range_setup(), efficiency_setup(),
                                    convergence_setup()}) {
    const std::string text = format_config(c);
    EXPECT_EQ(format_config(parse_config(text)), text);
  }
}

TEST(Config, ShippedConfigsMatchBuiltInSetups) {
  const std::string dir = RLR_CONFIG_DIR;
  const std::pair<const char*, ExperimentConfig> cases[] = {
      {"/reference.cfg", reference_setup()},   {"/plan.cfg", planner_setup()},
      {"/truncation.cfg", long_range_setup()}, {"/efficiency.cfg", efficiency_setup()},
      {"/convergence.cfg", convergence_setup()},
  };
  for (const auto& [file, builtin] : cases) {
    SCOPED_TRACE(file);
    EXPECT_EQ(format_config(load_config(dir + file)), format_config(builtin));
  }
}

TEST(Config, ShippedConfigsAllParse) {
  const std::string dir = RLR_CONFIG_DIR;
  for (const char* f : {"/bias.cfg", "/variance.cfg", "/train.cfg"}) {
    SCOPED_TRACE(f);
    EXPECT_NO_THROW(load_config(dir + f));
  }
}

TEST(Config, BuildChainFollowsSchedule) {
  const ChainSpec spec = build_chain(efficiency_setup().chain);
  EXPECT_EQ(spec.T, 10);
  EXPECT_NEAR(spec.sigma_at(1), std::sqrt(1e-5), 1e-15);
  EXPECT_NEAR(spec.sigma_at(10), std::sqrt(0.02), 1e-15);
  const ExperimentConfig lr = long_range_setup();
  const ChainSpec lin = build_chain(lr.chain);
  const ParamVector p = initial_params(lr.chain, lin.backbone);
  ASSERT_EQ(p.size(), 3);
  EXPECT_DOUBLE_EQ(p[0], 0.9);
  EXPECT_DOUBLE_EQ(p[1], 0.0);
  EXPECT_DOUBLE_EQ(p[2], 0.0);
}

TEST(Config, LoadMissingFileThrows) {
  EXPECT_THROW(load_config("/nonexistent/path.cfg"), ConfigError);
}
