#include "flowanom/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "flowanom/error.hpp"

namespace flowanom {

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

double parse_real(const std::string& s, const char* what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw Error(ErrorCode::Parse, std::string("bad ") + what + " '" + s + "'");
  }
  return v;
}

int parse_digits(const std::string& s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) throw Error(ErrorCode::Parse, "truncated timestamp '" + s + "'");
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i])))
      throw Error(ErrorCode::Parse, "bad timestamp '" + s + "'");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_timestamp(const std::string& text) {
  const std::string s = text;
  if (s.empty()) throw Error(ErrorCode::Parse, "empty timestamp");
  if (s.find('-', 1) == std::string::npos && s.find(':') == std::string::npos) {
    return parse_real(s, "epoch timestamp");
  }
  // YYYY-MM-DD[T ]HH:MM:SS[.fff](Z|+HH:MM|-HH:MM|+HHMM)
  if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':') {
    throw Error(ErrorCode::Parse, "bad ISO-8601 timestamp '" + s + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{parse_digits(s, 0, 4)},
                           month{static_cast<unsigned>(parse_digits(s, 5, 2))},
                           day{static_cast<unsigned>(parse_digits(s, 8, 2))}};
  if (!ymd.ok()) throw Error(ErrorCode::Parse, "invalid calendar date '" + s + "'");
  const int hh = parse_digits(s, 11, 2), mm = parse_digits(s, 14, 2), ss = parse_digits(s, 17, 2);
  if (hh > 23 || mm > 59 || ss > 60) throw Error(ErrorCode::Parse, "invalid time of day '" + s + "'");

  std::size_t pos = 19;
  double frac = 0.0;
  if (pos < s.size() && s[pos] == '.') {
    std::size_t end = pos + 1;
    while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    if (end == pos + 1) throw Error(ErrorCode::Parse, "bad fractional seconds '" + s + "'");
    frac = parse_real("0" + s.substr(pos, end - pos), "fractional seconds");
    pos = end;
  }
  if (pos >= s.size()) throw Error(ErrorCode::Parse, "timestamp lacks a UTC offset '" + s + "'");
  int offset = 0;
  if (s[pos] == 'Z' && pos + 1 == s.size()) {
    offset = 0;
  } else if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '+' ? 1 : -1;
    const std::string rest = s.substr(pos + 1);
    int oh = 0, om = 0;
    if (rest.size() == 5 && rest[2] == ':') {
      oh = parse_digits(rest, 0, 2);
      om = parse_digits(rest, 3, 2);
    } else if (rest.size() == 4) {
      oh = parse_digits(rest, 0, 2);
      om = parse_digits(rest, 2, 2);
    } else if (rest.size() == 2) {
      oh = parse_digits(rest, 0, 2);
    } else {
      throw Error(ErrorCode::Parse, "bad UTC offset '" + s + "'");
    }
    offset = sign * (oh * 3600 + om * 60);
  } else {
    throw Error(ErrorCode::Parse, "bad UTC offset '" + s + "'");
  }
  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days_since_epoch) * 86400.0 + hh * 3600 + mm * 60 + ss + frac - offset;
}

std::vector<FlowRecord> parse_records(std::istream& in, ParseLog* log) {
  ParseLog local;
  ParseLog& lg = log ? *log : local;
  lg = ParseLog{};

  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (read_line(in, line)) {
    ++lineno;
    if (!line.empty() && line.find_first_not_of(" \t") != std::string::npos) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw Error(ErrorCode::Parse, "record file has no header row");

  char delim = ',';
  if (line.find('\t') != std::string::npos) delim = '\t';
  else if (line.find(';') != std::string::npos && line.find(',') == std::string::npos) delim = ';';

  const char* required[] = {"record_id",  "service_id",  "board_stop", "alight_stop",
                            "board_time", "alight_time", "distance_m"};
  const auto header = split(line, delim);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  std::size_t idx[7];
  for (int k = 0; k < 7; ++k) {
    auto it = col.find(required[k]);
    if (it == col.end())
      throw Error(ErrorCode::Parse, std::string("record header lacks column ") + required[k]);
    idx[k] = it->second;
  }

  std::vector<FlowRecord> out;
  while (read_line(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++lg.rows;
    try {
      const auto f = split(line, delim);
      if (f.size() != header.size()) {
        throw Error(ErrorCode::Parse, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(f.size()));
      }
      FlowRecord r;
      r.record_id = f[idx[0]];
      r.service_id = ServiceId(f[idx[1]]);
      r.origin = NodeId(f[idx[2]]);
      r.destination = NodeId(f[idx[3]]);
      r.t_start = parse_timestamp(f[idx[4]]);
      r.t_end = parse_timestamp(f[idx[5]]);
      r.distance_m = parse_real(f[idx[6]], "distance");
      r.validate();
      out.push_back(std::move(r));
    } catch (const Error& e) {
      lg.rejected.push_back({lineno, e.what()});
    }
  }
  if (lg.rows > 0 && out.empty()) {
    throw Error(ErrorCode::AllRowsRejected,
                "all " + std::to_string(lg.rows) + " rows rejected; first: line " +
                    std::to_string(lg.rejected.front().line) + ": " + lg.rejected.front().reason);
  }
  return out;
}

std::vector<FlowRecord> read_records_file(const std::string& path, ParseLog* log) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  return parse_records(in, log);
}

void write_records(std::ostream& os, const std::vector<FlowRecord>& records) {
  os << "record_id,service_id,board_stop,alight_stop,board_time,alight_time,distance_m\n";
  for (const auto& r : records) {
    os << r.record_id << ',' << r.service_id << ',' << r.origin << ',' << r.destination << ','
       << format_number(r.t_start) << ',' << format_number(r.t_end) << ','
       << format_number(r.distance_m) << '\n';
  }
}

void write_routes(std::ostream& os, const std::vector<ServiceRoute>& routes) {
  os << "service_id,seq,stop_id,cumulative_m\n";
  for (const auto& r : routes)
    for (std::size_t i = 0; i < r.stops.size(); ++i)
      os << r.service_id << ',' << i << ',' << r.stops[i] << ',' << format_number(r.cumulative_m[i])
         << '\n';
}

std::vector<ServiceRoute> read_routes(std::istream& in) {
  std::string line;
  if (!read_line(in, line) || split(line, ',').size() != 4 || split(line, ',')[0] != "service_id")
    throw Error(ErrorCode::Parse, "route file header must be service_id,seq,stop_id,cumulative_m");
  std::map<ServiceId, std::vector<std::pair<long, std::pair<NodeId, double>>>> rows;
  std::size_t lineno = 1;
  while (read_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw Error(ErrorCode::Parse, "route line " + std::to_string(lineno));
    long seq = 0;
    auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), seq);
    if (ec != std::errc() || p != f[1].data() + f[1].size())
      throw Error(ErrorCode::Parse, "route line " + std::to_string(lineno) + ": bad seq");
    rows[ServiceId(f[0])].push_back({seq, {NodeId(f[2]), parse_real(f[3], "cumulative distance")}});
  }
  std::vector<ServiceRoute> out;
  for (auto& [service, stops] : rows) {
    std::sort(stops.begin(), stops.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    ServiceRoute r;
    r.service_id = service;
    for (auto& [seq, stop] : stops) {
      r.stops.push_back(stop.first);
      r.cumulative_m.push_back(stop.second);
    }
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

void write_rejections(std::ostream& os, const std::map<ServiceId, std::string>& rejected) {
  os << "service_id,reason\n";
  for (const auto& [service, reason] : rejected) os << service << ',' << sanitize(reason) << '\n';
}

void write_scored(std::ostream& os, const std::vector<ScoredRecord>& scored, double delta) {
  os << "# delta=" << format_number(delta) << '\n';
  os << "record_id,service_id,origin,destination,t_start,t_end,distance_m,observed_s,expected_s,"
        "alpha,significant\n";
  for (const auto& s : scored) {
    const auto& r = s.record;
    os << r.record_id << ',' << r.service_id << ',' << r.origin << ',' << r.destination << ','
       << format_number(r.t_start) << ',' << format_number(r.t_end) << ','
       << format_number(r.distance_m) << ',' << format_number(r.observed_s()) << ','
       << format_number(s.expected_s) << ',' << format_number(s.alpha) << ','
       << (s.alpha > delta ? 1 : 0) << '\n';
  }
}

ScoredFile read_scored(std::istream& in, const NetworkGraph& g) {
  ScoredFile out;
  std::string line;
  bool have_delta = false, have_header = false;
  std::size_t lineno = 0;
  while (read_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# delta=", 0) == 0) {
        out.delta = parse_real(line.substr(8), "delta");
        have_delta = true;
      }
      continue;
    }
    if (!have_header) {
      if (line.rfind("record_id,", 0) != 0) throw Error(ErrorCode::Parse, "scored file lacks header");
      have_header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 11) throw Error(ErrorCode::Parse, "scored line " + std::to_string(lineno));
    ++out.total;
    if (f[10] != "1") continue;
    ScoredRecord s;
    s.record.record_id = f[0];
    s.record.service_id = ServiceId(f[1]);
    s.record.origin = NodeId(f[2]);
    s.record.destination = NodeId(f[3]);
    s.record.t_start = parse_real(f[4], "t_start");
    s.record.t_end = parse_real(f[5], "t_end");
    s.record.distance_m = parse_real(f[6], "distance");
    s.expected_s = parse_real(f[8], "expected time");
    s.alpha = parse_real(f[9], "alpha");
    s.record.validate();
    s.path = resolve_path(g, s.record.service_id, s.record.origin, s.record.destination);
    out.significant.push_back(std::move(s));
  }
  if (!have_delta || !have_header) throw Error(ErrorCode::Parse, "not a scored-record file");
  return out;
}

void write_reports(std::ostream& os, const std::vector<AnomalyReport>& reports) {
  os << "rank,record_id,alpha,count,origin,destination,t_start,t_end,observed_s,expected_s,"
        "segments,window_start,window_end,provenance\n";
  std::size_t rank = 0;
  for (const auto& rep : reports) {
    const auto& r = rep.scored.record;
    std::string segs;
    double ws = 0.0, we = 0.0;
    for (const auto& ls : rep.localization.segments) {
      if (segs.empty()) {
        ws = ls.window_start;
        we = ls.window_end;
      } else {
        segs += '|';
      }
      ws = std::min(ws, ls.window_start);
      we = std::max(we, ls.window_end);
      segs += ls.segment.from.str() + ">" + ls.segment.to.str() + "@" +
              format_number(ls.segment.distance_m);
    }
    os << ++rank << ',' << r.record_id << ',' << format_number(rep.scored.alpha) << ','
       << rep.containment_count << ',' << r.origin << ',' << r.destination << ','
       << format_number(r.t_start) << ',' << format_number(r.t_end) << ','
       << format_number(r.observed_s()) << ',' << format_number(rep.scored.expected_s) << ','
       << segs << ',' << format_number(ws) << ',' << format_number(we) << ','
       << provenance_name(rep.localization.provenance) << '\n';
  }
}

void write_daily(std::ostream& os, const std::vector<DailyRow>& rows) {
  os << "date,mean_count,median_count,mean_alpha,median_alpha\n";
  for (const auto& r : rows) {
    os << r.date << ',' << format_number(r.mean_count) << ',' << format_number(r.median_count)
       << ',' << format_number(r.mean_alpha) << ',' << format_number(r.median_alpha) << '\n';
  }
}

void write_crossval(std::ostream& os, const CrossValResult& result) {
  os << "fold,model,train_rmse,test_rmse,n_test,excluded\n";
  for (const auto& r : result.rows) {
    os << r.fold << ',' << model_kind_name(r.kind) << ',' << format_number(r.train_rmse) << ','
       << format_number(r.test_rmse) << ',' << r.n_test << ',' << r.excluded << '\n';
  }
}

void write_truth(std::ostream& os, const SynthTruth& truth) {
  os << "kind,from,to,distance_m,true_speed,window_start,window_end,slowdown\n";
  for (const auto& seg : truth.network.segments()) {
    os << "segment," << seg.from << ',' << seg.to << ',' << format_number(seg.distance_m) << ','
       << format_number(truth.true_speed.at(seg.key())) << ",,,\n";
  }
  if (truth.congestion) {
    const auto& c = *truth.congestion;
    const Segment* seg = truth.network.find_segment(c.segment->from, c.segment->to);
    os << "congestion," << seg->from << ',' << seg->to << ',' << format_number(seg->distance_m)
       << ',' << format_number(truth.true_speed.at(seg->key())) << ','
       << format_number(c.window_start) << ',' << format_number(c.window_end) << ','
       << format_number(c.slowdown) << '\n';
  }
}

void write_epoch_log(std::ostream& os, const std::vector<EpochStats>& epochs) {
  os << "epoch,sse,sigma2\n";
  for (const auto& e : epochs)
    os << e.epoch << ',' << format_number(e.sse) << ',' << format_number(e.sigma2) << '\n';
}

}  // namespace flowanom
