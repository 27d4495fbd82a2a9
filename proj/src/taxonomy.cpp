#include "tennis/taxonomy.hpp"

namespace tennis::taxonomy {

namespace {

constexpr EnumSet<ShotDirection> kServeDirections{ShotDirection::T, ShotDirection::B,
                                                  ShotDirection::W};
constexpr EnumSet<ShotDirection> kStraightCross{ShotDirection::CC, ShotDirection::DL};
constexpr EnumSet<ShotDirection> kInside{ShotDirection::II, ShotDirection::IO};

// Court-side x shot-side table. A right-hander's forehand on the deuce side and
// backhand on the advantage side open the court (CC/DL); the other pairings
// hit inside (II/IO). Left-handers mirror this.
EnumSet<ShotDirection> rally_directions(Handedness hand, bool deuce, ShotSide side) {
  if (hand == Handedness::Unknown) {
    return rally_directions(Handedness::Left, deuce, side) |
           rally_directions(Handedness::Right, deuce, side);
  }
  const bool forehand = side == ShotSide::Forehand;
  const bool open = (hand == Handedness::Right) ? (deuce == forehand) : (deuce != forehand);
  return open ? kStraightCross : kInside;
}

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<E, N>& all, std::string_view token) {
  for (E v : all) {
    if (to_token(v) == token) return v;
  }
  return std::nullopt;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string describe(EnumSet<ShotDirection> set) {
  std::string out;
  for (auto d : set.values()) {
    if (!out.empty()) out += "/";
    out += to_token(d);
  }
  return out;
}

void check_form(const ShotLabel& label, Handedness hand, ValidationReport& report) {
  const bool serve = is_serve(label.shot_type);
  const auto directions = legal_directions(label.shot_type, hand, label.court, label.side);
  if (!directions.contains(label.direction)) {
    if (serve) {
      report.add(Severity::Error, std::string(codes::kServeDirection),
                 "serves take a T, B or W direction, got " + std::string(to_token(label.direction)),
                 "direction");
    } else if (is_serve_direction(label.direction)) {
      report.add(Severity::Error, std::string(codes::kGroundstrokeDirection),
                 "non-serve shots take CC, DL, II or IO, got " +
                     std::string(to_token(label.direction)),
                 "direction");
    } else {
      report.add(Severity::Error, std::string(codes::kHandednessDirection),
                 std::string(to_token(hand)) + "-handed " + std::string(to_token(label.side)) +
                     " from the " + (is_deuce(label.court) ? "deuce" : "ad") +
                     " court allows " + describe(directions) + ", got " +
                     std::string(to_token(label.direction)),
                 "direction");
    }
  }
  if (!legal_formations(label.shot_type).contains(label.formation)) {
    if (serve) {
      report.add(Severity::Error, std::string(codes::kServeFormation),
                 "serves need a conventional, i-formation or australian formation", "formation");
    } else {
      report.add(Severity::Error, std::string(codes::kNonServeFormation),
                 "non-serve shots use the non-serve formation", "formation");
    }
  }
}

}  // namespace

void ValidationReport::add(Severity severity, std::string code, std::string message,
                           std::optional<std::string> field,
                           std::optional<std::size_t> hit_index) {
  findings_.push_back(
      Finding{severity, std::move(code), std::move(message), std::move(field), hit_index});
}

void ValidationReport::merge(const ValidationReport& other,
                             std::optional<std::size_t> hit_index) {
  for (auto f : other.findings_) {
    if (hit_index) f.hit_index = hit_index;
    findings_.push_back(std::move(f));
  }
}

bool ValidationReport::valid() const { return error_count() == 0; }

bool ValidationReport::has_code(std::string_view code) const {
  for (const auto& f : findings_) {
    if (f.code == code) return true;
  }
  return false;
}

std::size_t ValidationReport::error_count() const {
  std::size_t n = 0;
  for (const auto& f : findings_) n += f.severity == Severity::Error;
  return n;
}

std::size_t ValidationReport::warning_count() const {
  return findings_.size() - error_count();
}

std::string ValidationReport::first_error_code() const {
  for (const auto& f : findings_) {
    if (f.severity == Severity::Error) return f.code;
  }
  return {};
}

namespace {
std::string summarize(const ValidationReport& report) {
  for (const auto& f : report.findings()) {
    if (f.severity == Severity::Error) return f.message;
  }
  return "validation failed";
}
}  // namespace

ValidationError::ValidationError(ValidationReport report)
    : Error(report.first_error_code().empty() ? "validation" : report.first_error_code(),
            summarize(report)),
      report_(std::move(report)) {}

EnumSet<ShotDirection> legal_directions(ShotType shot_type, Handedness handedness,
                                        CourtPosition court, ShotSide side) {
  if (is_serve(shot_type)) return kServeDirections;
  return rally_directions(handedness, is_deuce(court), side);
}

EnumSet<Formation> legal_formations(ShotType shot_type) {
  if (is_serve(shot_type)) {
    return {Formation::Conventional, Formation::IFormation, Formation::Australian};
  }
  return {Formation::NonServe};
}

EnumSet<ShotType> legal_shot_types(std::size_t shot_index) {
  if (shot_index == 0) throw Error("invalid-ordinal", "shot ordinals start at 1");
  if (shot_index == 1) return {ShotType::Serve, ShotType::SecondServe};
  if (shot_index == 2) return {ShotType::Return};
  return {ShotType::Volley, ShotType::Lob, ShotType::Smash, ShotType::Swing};
}

ValidationReport validate_shot(const ShotLabel& label, const PlayerProfile& profile,
                               std::size_t shot_index, bool is_last_shot) {
  const auto allowed_types = legal_shot_types(shot_index);
  ValidationReport report;
  if (profile.role != label.hitter) {
    report.add(Severity::Error, std::string(codes::kHitterMismatch),
               "label hitter " + std::string(to_token(label.hitter)) +
                   " does not match profile " + std::string(to_token(profile.role)),
               "hitter");
  }
  check_form(label, profile.handedness, report);

  if (!allowed_types.contains(label.shot_type)) {
    const std::string got(to_token(label.shot_type));
    if (shot_index == 1) {
      report.add(Severity::Error, std::string(codes::kFirstShotServe),
                 "the first shot of a rally must be a serve, got " + got, "shot_type");
    } else if (shot_index == 2) {
      report.add(Severity::Error, std::string(codes::kSecondShotReturn),
                 "the second shot of a rally must be a return, got " + got, "shot_type");
    } else {
      report.add(Severity::Error, std::string(codes::kRallyShotType),
                 "shot " + std::to_string(shot_index) + " cannot be a " + got, "shot_type");
    }
  }

  if (label.outcome != Outcome::In && !is_last_shot) {
    report.add(Severity::Error, std::string(codes::kOutcomeNotLast),
               "only the last shot of a rally can win or err", "outcome");
  } else if (label.outcome == Outcome::In && is_last_shot) {
    report.add(Severity::Warning, std::string(codes::kTruncatedRally),
               "last shot is still in play; rally looks truncated", "outcome");
  }
  return report;
}

ValidationReport validate_label_form(const ShotLabel& label) {
  ValidationReport report;
  check_form(label, Handedness::Unknown, report);
  return report;
}

std::string format_event_token(const ShotLabel& label) {
  auto report = validate_label_form(label);
  if (!report.valid()) throw ValidationError(std::move(report));
  std::string out;
  out += is_near(label.court) ? "near_" : "far_";
  out += is_deuce(label.court) ? "deuce_" : "ad_";
  out += to_token(label.side);
  out += '_';
  out += to_token(label.shot_type);
  out += '_';
  out += to_token(label.direction);
  out += '_';
  out += to_token(label.formation);
  out += '_';
  out += to_token(label.outcome);
  return out;
}

ShotLabel parse_event_token(std::string_view token, PlayerRole hitter) {
  const auto parts = split(token, '_');
  if (parts.size() != 7) {
    throw Error("malformed-token", "event token needs 7 underscore-separated fields, got " +
                                       std::to_string(parts.size()));
  }
  auto field = [&](std::size_t i, auto tag, std::string_view what) {
    using E = decltype(tag);
    auto v = from_token<E>(parts[i]);
    if (!v) {
      throw Error("malformed-token", "unknown " + std::string(what) + " '" + parts[i] + "'");
    }
    return *v;
  };
  bool near = false;
  if (parts[0] == "near") {
    near = true;
  } else if (parts[0] != "far") {
    throw Error("malformed-token", "unknown court half '" + parts[0] + "'");
  }
  bool deuce = false;
  if (parts[1] == "deuce") {
    deuce = true;
  } else if (parts[1] != "ad") {
    throw Error("malformed-token", "unknown court side '" + parts[1] + "'");
  }

  ShotLabel label;
  label.court = make_court(near, deuce);
  label.side = field(2, ShotSide{}, "shot side");
  label.shot_type = field(3, ShotType{}, "shot type");
  label.direction = field(4, ShotDirection{}, "direction");
  label.formation = field(5, Formation{}, "formation");
  label.outcome = field(6, Outcome{}, "outcome");
  label.hitter = hitter;

  auto report = validate_label_form(label);
  if (!report.valid()) throw ValidationError(std::move(report));
  return label;
}

ShotLabel parse_event_token(std::string_view token) {
  // Court half is the first field; fall back to the near team if it cannot be
  // read so that the full parser reports the real problem.
  const bool far = token.substr(0, 4) == "far_";
  return parse_event_token(token, far ? PlayerRole::P3 : PlayerRole::P1);
}

std::string_view to_token(CourtPosition v) {
  switch (v) {
    case CourtPosition::FarDeuce: return "far_deuce";
    case CourtPosition::FarAdvantage: return "far_ad";
    case CourtPosition::NearDeuce: return "near_deuce";
    case CourtPosition::NearAdvantage: return "near_ad";
  }
  return "?";
}

std::string_view to_token(ShotSide v) {
  return v == ShotSide::Forehand ? "forehand" : "backhand";
}

std::string_view to_token(ShotType v) {
  switch (v) {
    case ShotType::Serve: return "serve";
    case ShotType::SecondServe: return "second-serve";
    case ShotType::Return: return "return";
    case ShotType::Volley: return "volley";
    case ShotType::Lob: return "lob";
    case ShotType::Smash: return "smash";
    case ShotType::Swing: return "swing";
  }
  return "?";
}

std::string_view to_token(ShotDirection v) {
  switch (v) {
    case ShotDirection::T: return "t";
    case ShotDirection::B: return "b";
    case ShotDirection::W: return "w";
    case ShotDirection::CC: return "cc";
    case ShotDirection::DL: return "dl";
    case ShotDirection::II: return "ii";
    case ShotDirection::IO: return "io";
  }
  return "?";
}

std::string_view to_token(Formation v) {
  switch (v) {
    case Formation::Conventional: return "conventional";
    case Formation::IFormation: return "i-formation";
    case Formation::Australian: return "australian";
    case Formation::NonServe: return "non-serve";
  }
  return "?";
}

std::string_view to_token(Outcome v) {
  switch (v) {
    case Outcome::In: return "in";
    case Outcome::Win: return "win";
    case Outcome::Err: return "err";
  }
  return "?";
}

std::string_view to_token(Handedness v) {
  switch (v) {
    case Handedness::Left: return "left";
    case Handedness::Right: return "right";
    case Handedness::Unknown: return "unknown";
  }
  return "?";
}

std::string_view to_token(PlayerRole v) {
  switch (v) {
    case PlayerRole::P1: return "p1";
    case PlayerRole::P2: return "p2";
    case PlayerRole::P3: return "p3";
    case PlayerRole::P4: return "p4";
  }
  return "?";
}

std::string_view to_token(Severity v) { return v == Severity::Error ? "error" : "warning"; }

template <>
std::optional<CourtPosition> from_token<CourtPosition>(std::string_view t) {
  return lookup(kCourtPositions, t);
}
template <>
std::optional<ShotSide> from_token<ShotSide>(std::string_view t) {
  return lookup(kShotSides, t);
}
template <>
std::optional<ShotType> from_token<ShotType>(std::string_view t) {
  return lookup(kShotTypes, t);
}
template <>
std::optional<ShotDirection> from_token<ShotDirection>(std::string_view t) {
  return lookup(kShotDirections, t);
}
template <>
std::optional<Formation> from_token<Formation>(std::string_view t) {
  return lookup(kFormations, t);
}
template <>
std::optional<Outcome> from_token<Outcome>(std::string_view t) {
  return lookup(kOutcomes, t);
}
template <>
std::optional<Handedness> from_token<Handedness>(std::string_view t) {
  return lookup(kHandedness, t);
}
template <>
std::optional<PlayerRole> from_token<PlayerRole>(std::string_view t) {
  return lookup(kPlayerRoles, t);
}

template <typename E>
E parse_token(std::string_view token, std::string_view what) {
  auto v = from_token<E>(token);
  if (!v) {
    throw Error("unknown-value", "unknown " + std::string(what) + " '" + std::string(token) + "'");
  }
  return *v;
}

template CourtPosition parse_token<CourtPosition>(std::string_view, std::string_view);
template ShotSide parse_token<ShotSide>(std::string_view, std::string_view);
template ShotType parse_token<ShotType>(std::string_view, std::string_view);
template ShotDirection parse_token<ShotDirection>(std::string_view, std::string_view);
template Formation parse_token<Formation>(std::string_view, std::string_view);
template Outcome parse_token<Outcome>(std::string_view, std::string_view);
template Handedness parse_token<Handedness>(std::string_view, std::string_view);
template PlayerRole parse_token<PlayerRole>(std::string_view, std::string_view);

nlohmann::json to_json(const ShotLabel& label) {
  return {
      {"court", to_token(label.court)},         {"side", to_token(label.side)},
      {"shot_type", to_token(label.shot_type)}, {"direction", to_token(label.direction)},
      {"formation", to_token(label.formation)}, {"outcome", to_token(label.outcome)},
      {"hitter", to_token(label.hitter)},
  };
}

namespace {
std::string string_field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_string()) {
    throw Error("schema", std::string("expected string field '") + key + "'");
  }
  return j.at(key).get<std::string>();
}
}  // namespace

ShotLabel label_from_json(const nlohmann::json& j) {
  ShotLabel label;
  label.court = parse_token<CourtPosition>(string_field(j, "court"), "court position");
  label.side = parse_token<ShotSide>(string_field(j, "side"), "shot side");
  label.shot_type = parse_token<ShotType>(string_field(j, "shot_type"), "shot type");
  label.direction = parse_token<ShotDirection>(string_field(j, "direction"), "direction");
  label.formation = parse_token<Formation>(string_field(j, "formation"), "formation");
  label.outcome = parse_token<Outcome>(string_field(j, "outcome"), "outcome");
  label.hitter = parse_token<PlayerRole>(string_field(j, "hitter"), "player role");
  return label;
}

nlohmann::json to_json(const PlayerProfile& profile) {
  return {{"role", to_token(profile.role)},
          {"description", profile.description},
          {"handedness", to_token(profile.handedness)}};
}

PlayerProfile profile_from_json(const nlohmann::json& j) {
  PlayerProfile p;
  p.role = parse_token<PlayerRole>(string_field(j, "role"), "player role");
  p.description = string_field(j, "description");
  p.handedness = parse_token<Handedness>(string_field(j, "handedness"), "handedness");
  if (p.description.empty()) throw Error("schema", "player description must not be empty");
  return p;
}

nlohmann::json to_json(const ValidationReport& report) {
  auto findings = nlohmann::json::array();
  for (const auto& f : report.findings()) {
    nlohmann::json item{{"severity", to_token(f.severity)}, {"code", f.code},
                        {"message", f.message}};
    if (f.field) item["field"] = *f.field;
    if (f.hit_index) item["hit_index"] = *f.hit_index;
    findings.push_back(std::move(item));
  }
  return {{"valid", report.valid()}, {"findings", std::move(findings)}};
}

}  // namespace tennis::taxonomy
