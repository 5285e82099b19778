#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <vector>

#include "kraw/svg.hpp"

namespace kraw::svg {
namespace {

// Minimal well-formedness check: every element closes in order, and no raw
// '&' or '<' appears in text.
bool balanced(const std::string& doc) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while ((i = doc.find('<', i)) != std::string::npos) {
    const std::size_t end = doc.find('>', i);
    if (end == std::string::npos) return false;
    const std::string tag = doc.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    const std::string name = tag.substr(tag[0] == '/' ? 1 : 0, tag.find_first_of(" \t\n") -
                                                               (tag[0] == '/' ? 1 : 0));
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t i = s.find(needle); i != std::string::npos; i = s.find(needle, i + 1)) ++n;
  return n;
}

TEST(LinePlot, WellFormedWithEscapedLabels) {
  const std::vector<Series> series{{"a<b & c", {0, 1, 2}, {1, 4, 9}}, {"\"q\"", {0, 2}, {3, 3}}};
  PlotOptions opt;
  opt.title = "x < y & z";
  const std::string doc = line_plot(series, opt);
  EXPECT_TRUE(balanced(doc));
  EXPECT_EQ(doc.rfind("<?xml", 0), 0u);
  EXPECT_NE(doc.find("a&lt;b &amp; c"), std::string::npos);
  EXPECT_NE(doc.find("&quot;q&quot;"), std::string::npos);
  EXPECT_NE(doc.find("x &lt; y &amp; z"), std::string::npos);
  EXPECT_EQ(count(doc, "<polyline"), 2u);
  EXPECT_EQ(count(doc, "<circle"), 5u);
}

TEST(LinePlot, NonFinitePointsBreakTheLine) {
  const std::vector<Series> series{
      {"s", {0, 1, 2, 3, 4}, {1, 2, std::nan(""), 4, 5}}};
  PlotOptions opt;
  opt.markers = false;
  const std::string doc = line_plot(series, opt);
  EXPECT_TRUE(balanced(doc));
  EXPECT_EQ(count(doc, "<polyline"), 2u);
  EXPECT_EQ(doc.find("nan"), std::string::npos);
  EXPECT_EQ(doc.find("inf"), std::string::npos);
}

TEST(LinePlot, DegenerateInputs) {
  const std::vector<Series> empty;
  EXPECT_TRUE(balanced(line_plot(empty, {})));
  const std::vector<Series> flat{{"flat", {1}, {2}}};
  const std::string doc = line_plot(flat, {});
  EXPECT_TRUE(balanced(doc));
  EXPECT_EQ(doc.find("nan"), std::string::npos);
  const std::vector<Series> bad{{"bad", {1, 2}, {1}}};
  EXPECT_THROW(line_plot(bad, {}), std::invalid_argument);
}

TEST(LinePlot, PointsStayInsideCanvas) {
  const std::vector<Series> series{{"s", {-5, 0, 100}, {-1e6, 0, 1e6}}};
  PlotOptions opt;
  const std::string doc = line_plot(series, opt);
  const std::regex circle(R"re(cx="([-0-9.e]+)" cy="([-0-9.e]+)")re");
  int seen = 0;
  for (auto it = std::sregex_iterator(doc.begin(), doc.end(), circle); it != std::sregex_iterator();
       ++it, ++seen) {
    const double cx = std::stod((*it)[1]);
    const double cy = std::stod((*it)[2]);
    EXPECT_GE(cx, 0.0);
    EXPECT_LE(cx, opt.width);
    EXPECT_GE(cy, 0.0);
    EXPECT_LE(cy, opt.height);
  }
  EXPECT_EQ(seen, 3);
}

}  // namespace
}  // namespace kraw::svg
