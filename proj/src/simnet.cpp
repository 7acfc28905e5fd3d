#include "secdfl/simnet.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>

namespace secdfl {

namespace {

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int kind_order(MsgKind k) {
  switch (k) {
    case MsgKind::Y: return 0;
    case MsgKind::PartialZ: return 1;
    case MsgKind::FinalZ: return 2;
  }
  return 3;
}

const char* kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::Y: return "y";
    case MsgKind::PartialZ: return "zg";
    case MsgKind::FinalZ: return "z";
  }
  return "?";
}

MsgKind kind_from_name(const std::string& s) {
  if (s == "y") return MsgKind::Y;
  if (s == "zg") return MsgKind::PartialZ;
  if (s == "z") return MsgKind::FinalZ;
  fail(Errc::Io, "transcript: unknown message kind '" + s + "'");
}

}  // namespace

SimResult run_simulation(const Mat& ws, const AdmmConfig& cfg,
                         std::uint64_t seed) {
  AggregationResult engine = run_aggregation(ws, cfg, seed);
  const int n = static_cast<int>(ws.cols());

  Transcript tr;
  tr.n = n;
  tr.rho = cfg.rho;
  tr.mode = cfg.mode;
  tr.seed = seed;
  tr.iterations = cfg.iterations;
  if (cfg.mode == AggMode::Grouped) tr.schedule = cfg.schedule;

  std::vector<int> everyone(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) everyone[static_cast<std::size_t>(k)] = k;

  for (const IterationTrace& trace : engine.traces) {
    if (cfg.mode == AggMode::AllToAll) {
      for (int k = 0; k < n; ++k) {
        Message m;
        m.iteration = trace.iteration;
        m.kind = MsgKind::Y;
        m.sender = k;
        m.group = everyone;
        m.payload = trace.ys.col(k);
        tr.messages.push_back(std::move(m));
      }
    } else {
      // Y stays inside the sender's group; each group's partial goes to all
      for (std::size_t g = 0; g < trace.groups.size(); ++g)
        for (int p : trace.groups[g]) {
          Message m;
          m.iteration = trace.iteration;
          m.kind = MsgKind::Y;
          m.sender = p;
          m.audience = trace.groups[g];
          m.group = trace.groups[g];
          m.payload = trace.ys.col(p);
          tr.messages.push_back(std::move(m));
        }
      for (std::size_t g = 0; g < trace.groups.size(); ++g) {
        Message m;
        m.iteration = trace.iteration;
        m.kind = MsgKind::PartialZ;
        m.sender = static_cast<int>(g);
        m.group = trace.groups[g];
        m.payload = trace.partials[g];
        tr.messages.push_back(std::move(m));
      }
    }
    Message m;
    m.iteration = trace.iteration;
    m.kind = MsgKind::FinalZ;
    m.sender = -1;
    m.payload = trace.z;
    tr.messages.push_back(std::move(m));
  }

  std::stable_sort(tr.messages.begin(), tr.messages.end(),
                   [](const Message& a, const Message& b) {
                     if (a.iteration != b.iteration) return a.iteration < b.iteration;
                     if (kind_order(a.kind) != kind_order(b.kind))
                       return kind_order(a.kind) < kind_order(b.kind);
                     return a.sender < b.sender;
                   });

  SimResult out;
  out.z = engine.z;
  out.transcript = std::move(tr);
  out.engine = std::move(engine);
  return out;
}

SimResult run_simulation(const std::vector<ParamVector>& ws,
                         const AdmmConfig& cfg, std::uint64_t seed) {
  require(!ws.empty(), Errc::InvalidArgument, "run_simulation: no peers");
  Mat stacked(ws.front().size(), static_cast<Eigen::Index>(ws.size()));
  for (std::size_t k = 0; k < ws.size(); ++k) {
    require(ws[k].same_shape(ws.front()), Errc::ShapeMismatch,
            "run_simulation: peer inputs differ in shape");
    stacked.col(static_cast<Eigen::Index>(k)) = ws[k].data;
  }
  return run_simulation(stacked, cfg, seed);
}

ObserverView peer_view(const Transcript& tr, int observer) {
  require(observer >= 0 && observer < tr.n, Errc::InvalidArgument,
          "peer_view: unknown observer id");
  ObserverView view;
  view.observer = observer;
  view.n = tr.n;
  view.rho = tr.rho;
  view.mode = tr.mode;
  view.schedule = tr.schedule;
  view.iterations = tr.iterations;
  view.visible_ys.resize(static_cast<std::size_t>(tr.iterations));
  view.partials.resize(static_cast<std::size_t>(tr.iterations));
  view.zs.resize(static_cast<std::size_t>(tr.iterations));

  for (const Message& m : tr.messages) {
    require(m.iteration >= 1 && m.iteration <= tr.iterations, Errc::Io,
            "peer_view: message iteration out of range");
    const std::size_t idx = static_cast<std::size_t>(m.iteration - 1);
    switch (m.kind) {
      case MsgKind::Y: {
        const bool delivered =
            m.audience.empty() ||
            std::find(m.audience.begin(), m.audience.end(), observer) !=
                m.audience.end();
        if (delivered) view.visible_ys[idx][m.sender] = m.payload;
        break;
      }
      case MsgKind::PartialZ:
        view.partials[idx].emplace_back(m.group, m.payload);
        break;
      case MsgKind::FinalZ:
        view.zs[idx] = m.payload;
        break;
    }
  }
  return view;
}

ObserverView peer_view(const Transcript& tr, int observer, Vec own_w) {
  ObserverView view = peer_view(tr, observer);
  view.own_w = std::move(own_w);
  return view;
}

std::vector<Vec> replay_consensus(const Transcript& tr) {
  std::vector<Vec> zs;
  zs.reserve(static_cast<std::size_t>(tr.iterations));
  for (int i = 1; i <= tr.iterations; ++i) {
    std::vector<const Message*> ys(static_cast<std::size_t>(tr.n), nullptr);
    for (const Message& m : tr.messages)
      if (m.iteration == i && m.kind == MsgKind::Y) {
        require(m.sender >= 0 && m.sender < tr.n, Errc::Io,
                "replay: bad Y sender");
        ys[static_cast<std::size_t>(m.sender)] = &m;
      }
    for (const Message* m : ys)
      require(m != nullptr, Errc::MissingData, "replay: missing Y message");
    Vec acc = ys[0]->payload;
    for (int k = 1; k < tr.n; ++k) acc += ys[static_cast<std::size_t>(k)]->payload;
    zs.push_back(acc / static_cast<double>(tr.n));
  }
  return zs;
}

void write_transcript_jsonl(const Transcript& tr, std::ostream& os) {
  nlohmann::json header;
  header["type"] = "header";
  header["n"] = tr.n;
  header["rho"] = tr.rho;
  header["mode"] = tr.mode == AggMode::AllToAll ? "all" : "grouped";
  header["seed"] = tr.seed;
  header["iterations"] = tr.iterations;
  if (tr.schedule) header["schedule"] = schedule_to_json(*tr.schedule);
  os << header.dump() << '\n';
  for (const Message& m : tr.messages) {
    nlohmann::json j;
    j["type"] = "msg";
    j["iter"] = m.iteration;
    j["kind"] = kind_name(m.kind);
    j["sender"] = m.sender;
    if (!m.audience.empty()) j["audience"] = m.audience;
    if (!m.group.empty()) j["group"] = m.group;
    j["payload"] = to_std(m.payload);
    os << j.dump() << '\n';
  }
}

Transcript read_transcript_jsonl(std::istream& is) {
  Transcript tr;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::Io, std::string("transcript parse: ") + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      tr.n = j.at("n").get<int>();
      tr.rho = j.at("rho").get<double>();
      tr.mode = j.at("mode").get<std::string>() == "grouped" ? AggMode::Grouped
                                                             : AggMode::AllToAll;
      tr.seed = j.at("seed").get<std::uint64_t>();
      tr.iterations = j.at("iterations").get<int>();
      if (j.contains("schedule")) tr.schedule = schedule_from_json(j.at("schedule"));
      have_header = true;
    } else if (type == "msg") {
      require(have_header, Errc::Io, "transcript: message before header");
      Message m;
      m.iteration = j.at("iter").get<int>();
      m.kind = kind_from_name(j.at("kind").get<std::string>());
      m.sender = j.at("sender").get<int>();
      if (j.contains("audience")) m.audience = j.at("audience").get<std::vector<int>>();
      if (j.contains("group")) m.group = j.at("group").get<std::vector<int>>();
      m.payload = from_std(j.at("payload").get<std::vector<double>>());
      tr.messages.push_back(std::move(m));
    } else {
      fail(Errc::Io, "transcript: unknown record type '" + type + "'");
    }
  }
  require(have_header, Errc::Io, "transcript: missing header record");
  return tr;
}

}  // namespace secdfl
