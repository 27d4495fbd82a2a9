#pragma once

// Label vocabularies for doubles shot annotation and the legality rules that
// bind them together. Everything here is pure and thread-safe.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tennis/error.hpp"

namespace tennis::taxonomy {

enum class CourtPosition : std::uint8_t { FarDeuce, FarAdvantage, NearDeuce, NearAdvantage };
enum class ShotSide : std::uint8_t { Forehand, Backhand };
enum class ShotType : std::uint8_t { Serve, SecondServe, Return, Volley, Lob, Smash, Swing };
enum class ShotDirection : std::uint8_t { T, B, W, CC, DL, II, IO };
enum class Formation : std::uint8_t { Conventional, IFormation, Australian, NonServe };
enum class Outcome : std::uint8_t { In, Win, Err };
enum class Handedness : std::uint8_t { Left, Right, Unknown };
enum class PlayerRole : std::uint8_t { P1, P2, P3, P4 };
enum class Team : std::uint8_t { Near, Far };

inline constexpr std::array kCourtPositions{CourtPosition::FarDeuce, CourtPosition::FarAdvantage,
                                            CourtPosition::NearDeuce,
                                            CourtPosition::NearAdvantage};
inline constexpr std::array kShotSides{ShotSide::Forehand, ShotSide::Backhand};
inline constexpr std::array kShotTypes{ShotType::Serve, ShotType::SecondServe, ShotType::Return,
                                       ShotType::Volley, ShotType::Lob,         ShotType::Smash,
                                       ShotType::Swing};
inline constexpr std::array kShotDirections{ShotDirection::T,  ShotDirection::B,
                                            ShotDirection::W,  ShotDirection::CC,
                                            ShotDirection::DL, ShotDirection::II,
                                            ShotDirection::IO};
inline constexpr std::array kFormations{Formation::Conventional, Formation::IFormation,
                                        Formation::Australian, Formation::NonServe};
inline constexpr std::array kOutcomes{Outcome::In, Outcome::Win, Outcome::Err};
inline constexpr std::array kHandedness{Handedness::Left, Handedness::Right,
                                        Handedness::Unknown};
inline constexpr std::array kPlayerRoles{PlayerRole::P1, PlayerRole::P2, PlayerRole::P3,
                                         PlayerRole::P4};

constexpr bool is_near(CourtPosition c) {
  return c == CourtPosition::NearDeuce || c == CourtPosition::NearAdvantage;
}
constexpr bool is_deuce(CourtPosition c) {
  return c == CourtPosition::NearDeuce || c == CourtPosition::FarDeuce;
}
constexpr CourtPosition make_court(bool near, bool deuce) {
  if (near) return deuce ? CourtPosition::NearDeuce : CourtPosition::NearAdvantage;
  return deuce ? CourtPosition::FarDeuce : CourtPosition::FarAdvantage;
}

constexpr bool is_serve(ShotType t) { return t == ShotType::Serve || t == ShotType::SecondServe; }
constexpr bool is_serve_direction(ShotDirection d) {
  return d == ShotDirection::T || d == ShotDirection::B || d == ShotDirection::W;
}
constexpr bool is_groundstroke_direction(ShotDirection d) { return !is_serve_direction(d); }

constexpr Team team_of(PlayerRole r) {
  return (r == PlayerRole::P1 || r == PlayerRole::P2) ? Team::Near : Team::Far;
}
constexpr PlayerRole partner_of(PlayerRole r) {
  switch (r) {
    case PlayerRole::P1: return PlayerRole::P2;
    case PlayerRole::P2: return PlayerRole::P1;
    case PlayerRole::P3: return PlayerRole::P4;
    case PlayerRole::P4: return PlayerRole::P3;
  }
  return r;
}

// Small bitmask set over one of the label enums. Iteration follows enum order.
template <typename E>
class EnumSet {
 public:
  constexpr EnumSet() = default;
  constexpr EnumSet(std::initializer_list<E> values) {
    for (E v : values) insert(v);
  }

  constexpr void insert(E v) { bits_ |= bit(v); }
  constexpr bool contains(E v) const { return (bits_ & bit(v)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(__builtin_popcount(bits_)); }
  constexpr EnumSet operator|(EnumSet other) const { return from_bits(bits_ | other.bits_); }
  constexpr EnumSet operator&(EnumSet other) const { return from_bits(bits_ & other.bits_); }
  constexpr bool operator==(const EnumSet&) const = default;

  std::vector<E> values() const {
    std::vector<E> out;
    for (unsigned i = 0; i < 32; ++i) {
      if (bits_ & (1u << i)) out.push_back(static_cast<E>(i));
    }
    return out;
  }

 private:
  static constexpr std::uint32_t bit(E v) { return 1u << static_cast<unsigned>(v); }
  static constexpr EnumSet from_bits(std::uint32_t b) {
    EnumSet s;
    s.bits_ = b;
    return s;
  }
  std::uint32_t bits_ = 0;
};

struct ShotLabel {
  CourtPosition court = CourtPosition::NearDeuce;
  ShotSide side = ShotSide::Forehand;
  ShotType shot_type = ShotType::Serve;
  ShotDirection direction = ShotDirection::T;
  Formation formation = Formation::Conventional;
  Outcome outcome = Outcome::In;
  PlayerRole hitter = PlayerRole::P1;

  bool operator==(const ShotLabel&) const = default;
};

struct PlayerProfile {
  PlayerRole role = PlayerRole::P1;
  std::string description;
  Handedness handedness = Handedness::Unknown;

  bool operator==(const PlayerProfile&) const = default;
};

enum class Severity : std::uint8_t { Error, Warning };

struct Finding {
  Severity severity = Severity::Error;
  std::string code;
  std::string message;
  std::optional<std::string> field;
  // Position of the hit inside its rally (0-based) when the finding comes
  // from a rally-level check.
  std::optional<std::size_t> hit_index;

  bool operator==(const Finding&) const = default;
};

class ValidationReport {
 public:
  void add(Severity severity, std::string code, std::string message,
           std::optional<std::string> field = std::nullopt,
           std::optional<std::size_t> hit_index = std::nullopt);
  void merge(const ValidationReport& other, std::optional<std::size_t> hit_index = std::nullopt);

  bool valid() const;
  bool has_code(std::string_view code) const;
  std::size_t error_count() const;
  std::size_t warning_count() const;
  // Code of the first Error finding, empty when valid.
  std::string first_error_code() const;

  const std::vector<Finding>& findings() const { return findings_; }

 private:
  std::vector<Finding> findings_;
};

// Thrown when a label (or label-carrying request) is rejected; carries the
// full report so callers can surface every violated rule.
class ValidationError : public Error {
 public:
  explicit ValidationError(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// Stable finding codes.
namespace codes {
inline constexpr std::string_view kServeDirection = "serve-direction";
inline constexpr std::string_view kGroundstrokeDirection = "groundstroke-direction";
inline constexpr std::string_view kHandednessDirection = "handedness-direction";
inline constexpr std::string_view kServeFormation = "serve-formation";
inline constexpr std::string_view kNonServeFormation = "non-serve-formation";
inline constexpr std::string_view kFirstShotServe = "first-shot-serve";
inline constexpr std::string_view kSecondShotReturn = "second-shot-return";
inline constexpr std::string_view kRallyShotType = "rally-shot-type";
inline constexpr std::string_view kOutcomeNotLast = "outcome-not-last";
inline constexpr std::string_view kTruncatedRally = "truncated-rally";
inline constexpr std::string_view kHitterMismatch = "hitter-mismatch";
}  // namespace codes

EnumSet<ShotDirection> legal_directions(ShotType shot_type, Handedness handedness,
                                        CourtPosition court, ShotSide side);
EnumSet<Formation> legal_formations(ShotType shot_type);
// Shot types permitted at a 1-based position inside a rally.
EnumSet<ShotType> legal_shot_types(std::size_t shot_index);

// Full check of one label against the hitter's profile and its place in the
// rally. Throws Error("invalid-ordinal") for shot_index == 0.
ValidationReport validate_shot(const ShotLabel& label, const PlayerProfile& profile,
                               std::size_t shot_index, bool is_last_shot);

// Context-free subset of validate_shot: direction family, formation and the
// direction table under unknown handedness.
ValidationReport validate_label_form(const ShotLabel& label);

std::string format_event_token(const ShotLabel& label);
// The token does not carry the hitter; without an explicit hitter the first
// player of the team implied by the court position is used.
ShotLabel parse_event_token(std::string_view token);
ShotLabel parse_event_token(std::string_view token, PlayerRole hitter);

// Token vocabularies shared by event tokens, JSON and the wire protocols.
std::string_view to_token(CourtPosition v);
std::string_view to_token(ShotSide v);
std::string_view to_token(ShotType v);
std::string_view to_token(ShotDirection v);
std::string_view to_token(Formation v);
std::string_view to_token(Outcome v);
std::string_view to_token(Handedness v);
std::string_view to_token(PlayerRole v);
std::string_view to_token(Severity v);

template <typename E>
std::optional<E> from_token(std::string_view token);
template <>
std::optional<CourtPosition> from_token<CourtPosition>(std::string_view token);
template <>
std::optional<ShotSide> from_token<ShotSide>(std::string_view token);
template <>
std::optional<ShotType> from_token<ShotType>(std::string_view token);
template <>
std::optional<ShotDirection> from_token<ShotDirection>(std::string_view token);
template <>
std::optional<Formation> from_token<Formation>(std::string_view token);
template <>
std::optional<Outcome> from_token<Outcome>(std::string_view token);
template <>
std::optional<Handedness> from_token<Handedness>(std::string_view token);
template <>
std::optional<PlayerRole> from_token<PlayerRole>(std::string_view token);

// Throws Error("unknown-value") on unrecognised tokens.
template <typename E>
E parse_token(std::string_view token, std::string_view what);

nlohmann::json to_json(const ShotLabel& label);
ShotLabel label_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PlayerProfile& profile);
PlayerProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ValidationReport& report);

}  // namespace tennis::taxonomy
