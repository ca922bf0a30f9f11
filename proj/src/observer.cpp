#include "akid/observer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "akid/autodiff.hpp"

namespace akid {

namespace fs = std::filesystem;

std::array<double, 9> percentiles(const Tensor& t) {
  if (t.numel() == 0) throw ShapeError("percentiles of an empty tensor");
  std::vector<double> v = t.to_vector();
  std::sort(v.begin(), v.end());
  std::array<double, 9> out{};
  const double last = static_cast<double>(v.size() - 1);
  for (std::size_t i = 0; i < kPercentileLevels.size(); ++i) {
    const double pos = kPercentileLevels[i] / 100.0 * last;
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    out[i] = v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
  }
  // Interpolation rounding can break monotonicity by an ulp.
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = std::max(out[i], out[i - 1]);
  return out;
}

// ------------------------------------------------------------------ sink

namespace {

std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

SummarySink::SummarySink(const std::string& dir) : dir_(dir) {
  fs::create_directories(dir);
  scalar_csv_.open(fs::path(dir) / "scalars.csv", std::ios::trunc);
  dist_csv_.open(fs::path(dir) / "distributions.csv", std::ios::trunc);
  if (!scalar_csv_ || !dist_csv_) throw IoError("cannot open summary files under " + dir);
  scalar_csv_ << "clock,tag,value\n";
  dist_csv_ << "clock,tag,min,p7,p16,p31,p50,p69,p84,p93,max\n";
}

void SummarySink::check_clock(std::uint64_t clock, const std::string& tag) {
  auto it = last_clock_.find(tag);
  if (it != last_clock_.end() && clock <= it->second) {
    throw StateError("summary " + tag + ": clock " + std::to_string(clock) + " does not advance past " +
                     std::to_string(it->second));
  }
  last_clock_[tag] = clock;
}

void SummarySink::record_scalar(std::uint64_t clock, const std::string& tag, double value) {
  check_clock(clock, tag);
  scalars_.push_back({clock, tag, value});
  if (scalar_csv_.is_open()) scalar_csv_ << clock << ',' << csv_field(tag) << ',' << format_value(value) << '\n';
}

void SummarySink::record_distribution(std::uint64_t clock, const std::string& tag, const Tensor& t) {
  check_clock(clock, "dist:" + tag);
  DistRecord r{clock, tag, percentiles(t)};
  dists_.push_back(r);
  if (dist_csv_.is_open()) {
    dist_csv_ << clock << ',' << csv_field(tag);
    for (double v : r.values) dist_csv_ << ',' << format_value(v);
    dist_csv_ << '\n';
  }
}

void SummarySink::flush() {
  if (scalar_csv_.is_open()) scalar_csv_.flush();
  if (dist_csv_.is_open()) dist_csv_.flush();
}

std::vector<ScalarRecord> SummarySink::scalars(const std::string& tag) const {
  std::vector<ScalarRecord> out;
  std::copy_if(scalars_.begin(), scalars_.end(), std::back_inserter(out), [&](const auto& r) { return r.tag == tag; });
  return out;
}

// ------------------------------------------------------------------ images

TileLayout layout_for(std::size_t n, std::size_t pad) {
  if (n == 0) throw ShapeError("cannot lay out zero tiles");
  TileLayout l;
  l.cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  while (l.cols * l.cols < n) ++l.cols;
  while ((l.cols - 1) * (l.cols - 1) >= n) --l.cols;
  l.rows = (n + l.cols - 1) / l.cols;
  l.pad = pad;
  return l;
}

Image tile_images(const std::vector<Tensor>& tiles, const TileLayout& layout) {
  if (tiles.empty()) throw ShapeError("no tiles to draw");
  if (tiles.size() > layout.rows * layout.cols) throw ShapeError("layout has fewer cells than tiles");
  const Shape& s = tiles[0].shape();
  if (s.rank() != 3 || (s[2] != 1 && s[2] != 3)) throw ShapeError("tiles must be [h,w,1] or [h,w,3], got " + s.to_string());
  const std::size_t h = s[0], w = s[1], c = s[2];
  Image img;
  img.width = layout.cols * w + (layout.cols + 1) * layout.pad;
  img.height = layout.rows * h + (layout.rows + 1) * layout.pad;
  img.rgb.assign(img.width * img.height * 3, 0);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    if (tiles[t].shape() != s) throw ShapeError("tiles differ in shape");
    const auto v = tiles[t].to_vector();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    const std::size_t y0 = layout.pad + (t / layout.cols) * (h + layout.pad);
    const std::size_t x0 = layout.pad + (t % layout.cols) * (w + layout.pad);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        std::uint8_t* px = &img.rgb[((y0 + y) * img.width + x0 + x) * 3];
        for (std::size_t k = 0; k < 3; ++k) {
          const double value = v[(y * w + x) * c + (c == 3 ? k : 0)];
          px[k] = range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (value - *lo) / range)) : 128;
        }
      }
    }
  }
  return img;
}

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IoError("short write to " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  std::size_t maxval = 0;
  Image img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P6" || maxval != 255) throw IoError(path + ": not a P6 image with maxval 255");
  in.get();
  img.rgb.resize(img.width * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!in) throw IoError(path + ": truncated pixel data");
  return img;
}

namespace {

void collect_convs(const Block& block, std::vector<const ConvolutionLayer*>& out) {
  if (const auto* conv = dynamic_cast<const ConvolutionLayer*>(&block)) out.push_back(conv);
  if (const auto* seq = dynamic_cast<const SequentialBlock*>(&block)) {
    for (std::size_t i = 0; i < seq->size(); ++i) collect_convs(seq->child(i), out);
  }
}

std::string file_stem(const std::string& name) {
  std::string out = name;
  std::replace(out.begin(), out.end(), '/', '_');
  return out;
}

}  // namespace

std::vector<std::string> visualize_filters(const Brain& brain, const std::string& out_dir, std::uint64_t clock) {
  if (!brain.is_setup()) throw StateError("visualize_filters needs a brain that is set up");
  fs::create_directories(out_dir);
  std::vector<const ConvolutionLayer*> convs;
  for (std::size_t i = 0; i < brain.size(); ++i) collect_convs(brain.block(i), convs);
  std::vector<std::string> written;
  for (const auto* conv : convs) {
    const Tensor& w = conv->weights().value();  // [kh,kw,cin,cout]
    const std::size_t kh = w.shape()[0], kw = w.shape()[1], cin = w.shape()[2], cout = w.shape()[3];
    const std::size_t c = cin == 3 ? 3 : 1;
    std::vector<Tensor> tiles;
    for (std::size_t o = 0; o < cout; ++o) {
      Tensor tile(Shape{kh, kw, c}, DType::f64);
      for (std::size_t y = 0; y < kh; ++y) {
        for (std::size_t x = 0; x < kw; ++x) {
          for (std::size_t k = 0; k < c; ++k) tile.set((y * kw + x) * c + k, w.at(((y * kw + x) * cin + k) * cout + o));
        }
      }
      tiles.push_back(std::move(tile));
    }
    const std::string path =
        (fs::path(out_dir) / (file_stem(conv->name()) + "_filters_" + std::to_string(clock) + ".ppm")).string();
    write_ppm(path, tile_images(tiles, layout_for(tiles.size())));
    written.push_back(path);
  }
  return written;
}

std::map<std::string, std::size_t> visualize_activation(const Brain& brain, const std::vector<Tensor>& inputs,
                                                        const std::string& out_dir, std::uint64_t clock) {
  if (!brain.is_setup()) throw StateError("visualize_activation needs a brain that is set up");
  fs::create_directories(out_dir);
  auto clone = brain.get_val_copy();
  ForwardContext ctx;
  ctx.update_state = false;
  clone->forward(inputs, ctx);
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < clone->size(); ++i) {
    const std::string& name = clone->block(i).name();
    const Tensor& out = clone->data(name, 0);
    if (out.rank() != 4) continue;
    const std::size_t h = out.shape()[1], w = out.shape()[2], c = out.shape()[3];
    std::vector<Tensor> tiles;
    for (std::size_t k = 0; k < c; ++k) {
      Tensor tile(Shape{h, w, 1}, DType::f64);
      for (std::size_t p = 0; p < h * w; ++p) tile.set(p, out.at(p * c + k));
      tiles.push_back(std::move(tile));
    }
    write_ppm((fs::path(out_dir) / (file_stem(name) + "_activation_" + std::to_string(clock) + ".ppm")).string(),
              tile_images(tiles, layout_for(tiles.size())));
    counts[name] = c;
  }
  return counts;
}

// ------------------------------------------------------------------ graph

namespace {

std::string dot_id(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string export_dot(const Brain& brain) {
  std::ostringstream os;
  os << "digraph " << dot_id(brain.name()) << " {\n";
  if (brain.size() > 0) {
    os << "  rankdir=TB;\n";
    os << "  " << dot_id(kSystemIn) << " [shape=box, label=" << dot_id(kSystemIn) << "];\n";
    for (std::size_t i = 0; i < brain.size(); ++i) {
      const Block& b = brain.block(i);
      os << "  " << dot_id(b.name()) << " [label=" << dot_id(b.name() + "\\n" + b.kind()) << "];\n";
    }
    for (std::size_t i = 0; i < brain.size(); ++i) {
      for (const auto& ref : brain.inputs_of(i)) {
        std::string label;
        for (std::size_t k = 0; k < ref.idxs.size(); ++k) label += (k ? "," : "") + std::to_string(ref.idxs[k]);
        os << "  " << dot_id(ref.name) << " -> " << dot_id(brain.block(i).name());
        std::vector<std::string> attrs;
        if (!label.empty()) attrs.push_back("label=" + dot_id(label));
        if (ref.delayed) attrs.push_back("style=dashed");
        if (!attrs.empty()) {
          os << " [";
          for (std::size_t k = 0; k < attrs.size(); ++k) os << (k ? ", " : "") << attrs[k];
          os << "]";
        }
        os << ";\n";
      }
    }
  }
  os << "}\n";
  return os.str();
}

}  // namespace akid
