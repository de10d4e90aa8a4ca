#include <gtest/gtest.h>

#include <cmath>

#include "lapkey/io.hpp"
#include "test_util.hpp"

using namespace lapkey;

TEST(Format, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.123, 0.0}) {
    EXPECT_EQ(std::strtod(io::format_double(x).c_str(), nullptr), x);
  }
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(INFINITY), "inf");
  EXPECT_EQ(io::format_double(NAN), "nan");
}

TEST(Csv, QuotesSpecialFields) {
  EXPECT_EQ(io::csv_field("plain"), "plain");
  EXPECT_EQ(io::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(io::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(io::csv_field("two\nlines"), "\"two\nlines\"");
}

TEST(Csv, CrlfRowsAndMetadataLine) {
  io::CsvWriter csv({"a", "b"});
  csv.row({"1", "x,y"});
  const auto text = csv.str(42);
  EXPECT_EQ(text.rfind("a,b\r\n1,\"x,y\"\r\n# 1.0.0,", 0), 0u);
  EXPECT_EQ(text.substr(text.size() - 5), ",42\r\n");
  EXPECT_THROW(csv.row({"only"}), DimensionError);
}

TEST(MdpJson, RoundTrip) {
  const auto mdp = fixtures::random_mdp(5, 2, 3, 0.7).with_terminals({4});
  const auto back = io::load_mdp(io::dump(io::mdp_to_json(mdp)));
  EXPECT_EQ(back.n_states(), 5);
  EXPECT_EQ(back.gamma(), 0.7);
  EXPECT_TRUE(back.is_terminal(4));
  const auto d1 = mdp.dense(), d2 = back.dense();
  EXPECT_EQ(d1, d2);
}

TEST(MdpJson, DiagnosticsNameTheField) {
  auto j = io::mdp_to_json(fixtures::swap_mdp());
  j["transition"][1][0][0] = 0.5;
  try {
    io::mdp_from_json(j);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("transition[1][0]"), std::string::npos) << e.what();
  }
  auto missing = io::mdp_to_json(fixtures::swap_mdp());
  missing.erase("gamma");
  EXPECT_THROW(io::mdp_from_json(missing), FormatError);
  auto bad_type = io::mdp_to_json(fixtures::swap_mdp());
  bad_type["n_states"] = "two";
  EXPECT_THROW(io::mdp_from_json(bad_type), FormatError);
}

TEST(MdpJson, ParseErrorsReportLine) {
  try {
    io::load_mdp("{\n\"n_states\": 2,\n oops\n}");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Layout, GridRoundTrip) {
  const auto g = four_rooms_goal_task();
  const auto back = io::load_layout(io::dump(io::layout_json(g)));
  EXPECT_EQ(back.n_states(), 104);
  EXPECT_EQ(back.ascii(), g.ascii());
  EXPECT_EQ(back.mdp.dense(), g.mdp.dense());
}

TEST(Layout, ItemCollectorRoundTripAndTamperCheck) {
  const auto ic = item_collector({5, 2, 50, 4, ItemRewardScheme::kAny, 0.9});
  auto j = io::layout_json(ic);
  const auto back = io::load_item_collector(io::dump(j));
  EXPECT_EQ(back.item_cells, ic.item_cells);
  EXPECT_EQ(back.config.scheme, ItemRewardScheme::kAny);
  j["items"][0]["row"] = (j["items"][0]["row"].get<int>() + 1) % 5;
  j["items"][0]["col"] = (j["items"][0]["col"].get<int>() + 1) % 5;
  EXPECT_THROW(io::load_item_collector(io::dump(j)), FormatError);
  EXPECT_THROW(io::parse_scheme("sometimes"), FormatError);
}

TEST(Artifacts, BasisCsvShape) {
  const auto g = four_rooms();
  const auto chain = induced_transition_matrix(g.mdp, PolicyTable::uniform(104, 4));
  const auto b = eigendecompose(build_laplacian(chain));
  const auto text = io::basis_csv(b, 3, 0);
  EXPECT_EQ(text.rfind("state,e1,e2,e3\r\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 106);
  const auto ev = io::eigenvalues_json(b, 3, chain, 5);
  EXPECT_EQ(ev["eigenvalues"].size(), 3u);
  EXPECT_EQ(ev["metadata"]["seed"], 5);
  EXPECT_LE(ev["graph_norms"][0].get<double>(), 1e-7);
  EXPECT_NEAR(ev["graph_norms"][1].get<double>(), std::sqrt(b.eigenvalues(1)), 1e-10);
}
