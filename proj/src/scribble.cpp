#include "gdc/scribble.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace gdc {

int ScribbleSet::num_categories() const {
  int n = 0;
  for (const auto& s : strokes) n = std::max(n, s.category + 1);
  return n;
}

void ScribbleSet::validate() const {
  std::vector<bool> seen;
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const Stroke& s = strokes[i];
    const std::string where = "stroke " + std::to_string(i) + ": ";
    if (s.category < 0) throw FormatError(where + "category must be >= 0");
    if (s.radius < 1) throw FormatError(where + "radius must be >= 1");
    if (s.points.empty()) throw FormatError(where + "polyline has no points");
    if (static_cast<std::size_t>(s.category) >= seen.size()) seen.resize(static_cast<std::size_t>(s.category) + 1);
    seen[static_cast<std::size_t>(s.category)] = true;
  }
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c]) throw FormatError("category ids must be dense from 0; missing " + std::to_string(c));
}

void ScribbleSet::validate(Index height, Index width) const {
  validate();
  for (std::size_t i = 0; i < strokes.size(); ++i)
    for (const Point& p : strokes[i].points)
      if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
        throw FormatError("stroke " + std::to_string(i) + ": point (" + std::to_string(p.x) + ", " +
                          std::to_string(p.y) + ") outside " + std::to_string(width) + "x" + std::to_string(height) +
                          " image");
}

ScribbleSet parse_scribbles(const nlohmann::json& j) {
  ScribbleSet out;
  try {
    if (!j.is_object()) throw FormatError("scribble record must be a JSON object");
    if (j.contains("image")) out.image = j.at("image").get<std::string>();
    const auto& strokes = j.at("strokes");
    if (!strokes.is_array()) throw FormatError("\"strokes\" must be an array");
    for (const auto& js : strokes) {
      Stroke s;
      s.category = js.at("category").get<int>();
      s.radius = js.value("radius", 1);
      for (const auto& p : js.at("points")) {
        if (!p.is_array() || p.size() != 2) throw FormatError("points must be [x, y] pairs");
        for (const auto& v : p)
          if (!v.is_number_integer()) throw FormatError("point coordinates must be integers");
        s.points.push_back({p[0].get<Index>(), p[1].get<Index>()});
      }
      out.strokes.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scribbles: ") + e.what());
  }
  out.validate();
  return out;
}

ScribbleSet parse_scribbles(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scribbles: ") + e.what());
  }
  return parse_scribbles(j);
}

ScribbleSet read_scribbles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scribbles(ss.str());
}

nlohmann::json to_json(const ScribbleSet& scribbles) {
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& s : scribbles.strokes) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : s.points) points.push_back({p.x, p.y});
    strokes.push_back({{"category", s.category}, {"radius", s.radius}, {"points", std::move(points)}});
  }
  return {{"image", scribbles.image}, {"strokes", std::move(strokes)}};
}

namespace {

// Squared distance from (px, py) to the segment a-b.
double segment_distance_sq(double px, double py, const Point& a, const Point& b) {
  const double dx = static_cast<double>(b.x - a.x), dy = static_cast<double>(b.y - a.y);
  const double len_sq = dx * dx + dy * dy;
  double t = 0;
  if (len_sq > 0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len_sq, 0.0, 1.0);
  const double ex = px - (a.x + t * dx), ey = py - (a.y + t * dy);
  return ex * ex + ey * ey;
}

}  // namespace

std::vector<Index> rasterize(const Stroke& stroke, Index height, Index width) {
  std::vector<Index> out;
  const double r_sq = static_cast<double>(stroke.radius) * stroke.radius;
  const std::size_t n = stroke.points.size();
  const std::size_t segments = std::max<std::size_t>(1, n - 1);  // a single point is a zero-length segment
  for (std::size_t i = 0; i < segments; ++i) {
    const Point& a = stroke.points[i];
    const Point& b = stroke.points[std::min(i + 1, n - 1)];
    const Index y0 = std::max<Index>(0, std::min(a.y, b.y) - stroke.radius);
    const Index y1 = std::min<Index>(height - 1, std::max(a.y, b.y) + stroke.radius);
    const Index x0 = std::max<Index>(0, std::min(a.x, b.x) - stroke.radius);
    const Index x1 = std::min<Index>(width - 1, std::max(a.x, b.x) + stroke.radius);
    for (Index y = y0; y <= y1; ++y)
      for (Index x = x0; x <= x1; ++x)
        if (segment_distance_sq(static_cast<double>(x), static_cast<double>(y), a, b) <= r_sq)
          out.push_back(y * width + x);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

LabelMask rasterize(const ScribbleSet& scribbles, Index height, Index width) {
  LabelMask mask(height, width);
  for (const auto& s : scribbles.strokes)
    for (Index p : rasterize(s, height, width)) mask.labels[static_cast<std::size_t>(p)] = s.category;
  return mask;
}

Expansion expand_scribbles(const SuperpixelMap& superpixels, const ScribbleSet& scribbles) {
  const Index h = superpixels.height, w = superpixels.width;
  if (superpixels.labels.size() != static_cast<std::size_t>(h * w))
    throw ShapeError("expand_scribbles: superpixel map does not match its dimensions");
  scribbles.validate(h, w);

  // votes[superpixel][category] = stroke pixels of that category inside it.
  // A pixel covered twice by the same category counts once.
  std::vector<std::map<int, Index>> votes(static_cast<std::size_t>(superpixels.count));
  const int categories = scribbles.num_categories();
  for (int c = 0; c < categories; ++c) {
    std::vector<Index> pixels;
    for (const auto& s : scribbles.strokes) {
      if (s.category != c) continue;
      auto more = rasterize(s, h, w);
      pixels.insert(pixels.end(), more.begin(), more.end());
    }
    std::sort(pixels.begin(), pixels.end());
    pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
    for (Index p : pixels) ++votes[static_cast<std::size_t>(superpixels.labels[static_cast<std::size_t>(p)])][c];
  }

  std::vector<int> winner(votes.size(), LabelMask::kUnlabeled);
  Expansion out;
  for (std::size_t sp = 0; sp < votes.size(); ++sp) {
    if (votes[sp].empty()) continue;
    if (votes[sp].size() > 1) ++out.conflicts;
    Index best = -1;
    for (const auto& [c, n] : votes[sp])  // ascending category: strict > keeps the lower id on ties
      if (n > best) best = n, winner[sp] = c;
  }
  out.mask = LabelMask(h, w);
  for (std::size_t i = 0; i < out.mask.labels.size(); ++i)
    out.mask.labels[i] = winner[static_cast<std::size_t>(superpixels.labels[i])];
  return out;
}

std::vector<double> class_weights(const LabelMask& mask, int num_categories) {
  std::vector<Index> counts;
  Index total = 0;
  for (int l : mask.labels) {
    if (l == LabelMask::kUnlabeled) continue;
    if (l < 0) throw ShapeError("class_weights: invalid category id " + std::to_string(l));
    if (static_cast<std::size_t>(l) >= counts.size()) counts.resize(static_cast<std::size_t>(l) + 1, 0);
    ++counts[static_cast<std::size_t>(l)];
    ++total;
  }
  if (total == 0) throw ShapeError("class_weights: mask has no labeled pixels");
  if (num_categories >= 0) {
    if (counts.size() > static_cast<std::size_t>(num_categories))
      throw ShapeError("class_weights: mask holds a category id >= " + std::to_string(num_categories));
    counts.resize(static_cast<std::size_t>(num_categories), 0);
  }
  std::vector<double> weights(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c)
    weights[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  return weights;
}

}  // namespace gdc
