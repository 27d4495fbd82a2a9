#include "tennis/labelgen.hpp"
#include "tennis/rallystore.hpp"
#include "tennis/service.hpp"

namespace tennis::service {

namespace {

using json = nlohmann::json;
namespace tx = taxonomy;

template <typename E, std::size_t N>
json enum_of(const std::array<E, N>& values) {
  json out = json::array();
  for (E v : values) out.push_back(tx::to_token(v));
  return {{"type", "string"}, {"enum", out}};
}

json ref(const std::string& name) { return {{"$ref", "#/$defs/" + name}}; }

json object(json properties, std::vector<std::string> required) {
  return {{"type", "object"}, {"properties", std::move(properties)}, {"required", required}};
}

json nullable(json schema) { return {{"anyOf", json::array({std::move(schema), {{"type", "null"}}})}}; }

json array_of(json items) { return {{"type", "array"}, {"items", std::move(items)}}; }

const json kInt = {{"type", "integer"}};
const json kNum = {{"type", "number"}};
const json kStr = {{"type", "string"}};
const json kBool = {{"type", "boolean"}};

json route(const char* method, const char* path, json request, json response, int status = 200) {
  json r{{"method", method}, {"path", path}, {"status", status}, {"response", std::move(response)}};
  if (!request.is_null()) r["request"] = std::move(request);
  return r;
}

}  // namespace

json schema_document() {
  json defs;
  defs["Point"] = {{"type", "array"}, {"items", kNum}, {"minItems", 2}, {"maxItems", 2}};
  defs["BBox"] = {{"type", "array"}, {"items", kNum}, {"minItems", 4}, {"maxItems", 4},
                  {"description", "[x, y, w, h] in image pixels"}};
  defs["CourtPosition"] = enum_of(tx::kCourtPositions);
  defs["ShotSide"] = enum_of(tx::kShotSides);
  defs["ShotType"] = enum_of(tx::kShotTypes);
  defs["ShotDirection"] = enum_of(tx::kShotDirections);
  defs["Formation"] = enum_of(tx::kFormations);
  defs["Outcome"] = enum_of(tx::kOutcomes);
  defs["Handedness"] = enum_of(tx::kHandedness);
  defs["PlayerRole"] = enum_of(tx::kPlayerRoles);
  defs["ShotLabel"] = object({{"court", ref("CourtPosition")},
                              {"side", ref("ShotSide")},
                              {"shot_type", ref("ShotType")},
                              {"direction", ref("ShotDirection")},
                              {"formation", ref("Formation")},
                              {"outcome", ref("Outcome")},
                              {"hitter", ref("PlayerRole")}},
                             {"court", "side", "shot_type", "direction", "formation", "outcome",
                              "hitter"});
  defs["PlayerProfile"] = object(
      {{"role", ref("PlayerRole")}, {"description", kStr}, {"handedness", ref("Handedness")}},
      {"role", "description", "handedness"});
  defs["Finding"] = object({{"severity", {{"type", "string"}, {"enum", {"error", "warning"}}}},
                            {"code", kStr},
                            {"message", kStr},
                            {"field", kStr},
                            {"hit_index", kInt}},
                           {"severity", "code", "message"});
  defs["ValidationReport"] =
      object({{"valid", kBool}, {"findings", array_of(ref("Finding"))}}, {"valid", "findings"});
  defs["NetConfig"] = object(
      {{"left", ref("Point")},
       {"right", ref("Point")},
       {"near_deuce_side", {{"type", "string"}, {"enum", {"camera_right", "camera_left"}}}}},
      {"left", "right"});
  defs["FieldProvenance"] =
      object({{"predictor", kStr}, {"confidence", kNum}}, {"predictor", "confidence"});
  defs["HittingMoment"] = object({{"frame", kInt},
                                  {"hitter", ref("PlayerRole")},
                                  {"anchor", ref("Point")},
                                  {"label", nullable(ref("ShotLabel"))},
                                  {"label_source", {{"type", "string"},
                                                    {"enum", {"generated", "confirmed"}}}},
                                  {"generated_label", nullable(ref("ShotLabel"))},
                                  {"provenance", {{"type", "object"},
                                                  {"additionalProperties", ref("FieldProvenance")}}}},
                                 {"frame", "hitter", "anchor", "label", "label_source"});
  defs["Rally"] = object({{"id", kInt},
                          {"start_frame", kInt},
                          {"end_frame", nullable(kInt)},
                          {"end_ball_position", nullable(ref("Point"))},
                          {"hits", array_of(ref("HittingMoment"))}},
                         {"id", "start_frame", "end_frame", "hits"});
  defs["VideoSource"] = {{"type", "string"}, {"enum", {"professional", "ncaa", "other"}}};
  defs["VideoRecord"] = object({{"id", kStr},
                                {"title", kStr},
                                {"source", ref("VideoSource")},
                                {"frame_count", kInt},
                                {"frame_directory", kStr},
                                {"players", array_of(ref("PlayerProfile"))},
                                {"net", nullable(ref("NetConfig"))},
                                {"next_rally_id", kInt},
                                {"rallies", array_of(ref("Rally"))}},
                               {"id", "title", "source", "frame_count", "players", "rallies"});
  defs["VideoSummary"] = object({{"id", kStr},
                                 {"title", kStr},
                                 {"source", ref("VideoSource")},
                                 {"frame_count", kInt},
                                 {"rallies", kInt},
                                 {"hits", kInt}},
                                {"id", "title", "frame_count"});
  defs["CocoDocument"] = object({{"images", array_of({{"type", "object"}})},
                                 {"categories", array_of({{"type", "object"}})},
                                 {"annotations", array_of({{"type", "object"}})}},
                                {"images", "categories", "annotations"});
  defs["JobStatus"] = object(
      {{"job_id", kStr},
       {"kind", {{"type", "string"}, {"enum", {"train", "generate"}}}},
       {"state", {{"type", "string"}, {"enum", {"queued", "running", "succeeded", "failed"}}}},
       {"progress", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
       {"message", kStr},
       {"error_code", kStr},
       {"transitions", array_of(kStr)},
       {"result", {}}},
      {"job_id", "kind", "state", "progress", "message"});
  defs["EvalResult"] = object({{"task", kStr},
                               {"class_names", array_of(kStr)},
                               {"accuracy", kNum},
                               {"macro_precision", kNum},
                               {"macro_recall", kNum},
                               {"macro_auc", nullable(kNum)},
                               {"confusion", array_of(array_of(kInt))},
                               {"per_class", array_of({{"type", "object"}})},
                               {"excluded_classes", array_of(kInt)},
                               {"auc_excluded_classes", array_of(kInt)}},
                              {"task", "accuracy", "macro_precision", "macro_recall"});
  defs["ApiError"] =
      object({{"code", kStr}, {"message", kStr}, {"detail", {}}}, {"code", "message"});

  json tasks = json::array();
  for (auto t : labelgen::kTasks) tasks.push_back(labelgen::to_token(t));
  defs["Task"] = {{"type", "string"}, {"enum", tasks}};

  const json new_video = object({{"id", kStr},
                                 {"title", kStr},
                                 {"source", ref("VideoSource")},
                                 {"frame_count", kInt},
                                 {"frame_directory", kStr}},
                                {"title", "frame_count"});
  const json new_rally =
      object({{"start_frame", kInt}, {"end_frame", nullable(kInt)},
              {"end_ball_position", nullable(ref("Point"))}},
             {"start_frame"});
  const json new_hit = object({{"frame", kInt},
                               {"hitter", ref("PlayerRole")},
                               {"anchor", ref("Point")},
                               {"bbox", ref("BBox")}},
                              {"frame", "hitter"});
  const json generate = object({{"model", {{"type", "string"}, {"enum", {"random", "posegcn", "remote"}}}},
                                {"seed", kInt},
                                {"rally_ids", array_of(kInt)},
                                {"fallback", kBool}},
                               {});
  const json validate_shot = object({{"label", ref("ShotLabel")},
                                     {"profile", ref("PlayerProfile")},
                                     {"ordinal", {{"type", "integer"}, {"minimum", 1}}},
                                     {"is_last", kBool}},
                                    {"label"});
  const json train = object({{"task", ref("Task")},
                             {"config", object({{"variant", {{"type", "string"},
                                                             {"enum", {"single_pose", "double_pose"}}}},
                                                {"hidden_dims", array_of(kInt)},
                                                {"learning_rate", kNum},
                                                {"epochs_max", kInt},
                                                {"batch_size", kInt},
                                                {"patience", kInt},
                                                {"seed", kInt},
                                                {"optimizer", {{"type", "string"},
                                                               {"enum", {"sgd", "adamw"}}}},
                                                {"weight_decay", kNum},
                                                {"split_ratio", kNum},
                                                {"split_seed", kInt},
                                                {"holdout_video_ids", array_of(kStr)},
                                                {"video_ids", array_of(kStr)}},
                                               {})}},
                            {"task"});

  json routes = json::array({
      route("GET", "/schema", nullptr, {{"type", "object"}}),
      route("GET", "/videos", nullptr, array_of(ref("VideoSummary"))),
      route("POST", "/videos", new_video, ref("VideoRecord"), 201),
      route("GET", "/videos/{id}", nullptr, ref("VideoRecord")),
      route("PUT", "/videos/{id}", new_video, ref("VideoRecord")),
      route("DELETE", "/videos/{id}", nullptr, nullptr, 204),
      route("GET", "/videos/{id}/players", nullptr, array_of(ref("PlayerProfile"))),
      route("PUT", "/videos/{id}/players", array_of(ref("PlayerProfile")),
            array_of(ref("PlayerProfile"))),
      route("GET", "/videos/{id}/annotations", nullptr, ref("CocoDocument")),
      route("PUT", "/videos/{id}/annotations", ref("CocoDocument"), {{"type", "object"}}),
      route("GET", "/videos/{id}/net", nullptr, ref("NetConfig")),
      route("PUT", "/videos/{id}/net", ref("NetConfig"), ref("NetConfig")),
      route("GET", "/videos/{id}/rallies", nullptr, array_of(ref("Rally"))),
      route("POST", "/videos/{id}/rallies", new_rally, ref("Rally"), 201),
      route("GET", "/videos/{id}/rallies/{rid}", nullptr, ref("Rally")),
      route("PUT", "/videos/{id}/rallies/{rid}", new_rally, ref("Rally")),
      route("DELETE", "/videos/{id}/rallies/{rid}", nullptr, nullptr, 204),
      route("POST", "/videos/{id}/rallies/{rid}/hits", new_hit, ref("HittingMoment"), 201),
      route("DELETE", "/videos/{id}/rallies/{rid}/hits/{n}", nullptr, nullptr, 204),
      route("PUT", "/videos/{id}/rallies/{rid}/hits/{n}/label",
            {{"anyOf", json::array({ref("ShotLabel"), kStr})}}, ref("HittingMoment")),
      route("GET", "/videos/{id}/labels", nullptr, {{"type", "object"}}),
      route("POST", "/videos/{id}/labels/generate", generate, ref("JobStatus"), 202),
      route("GET", "/videos/{id}/validate", nullptr, {{"type", "object"}}),
      route("GET", "/videos/{id}/metrics?task={task}", nullptr, ref("EvalResult")),
      route("GET", "/videos/{id}/frames/{index}.jpg", nullptr, {{"type", "string"},
                                                                {"contentMediaType", "image/jpeg"}}),
      route("POST", "/validate/shot", validate_shot, ref("ValidationReport")),
      route("POST", "/models/gcn/train", train, ref("JobStatus"), 202),
      route("GET", "/models", nullptr, array_of({{"type", "object"}})),
      route("GET", "/jobs", nullptr, array_of(ref("JobStatus"))),
      route("GET", "/jobs/{job_id}", nullptr, ref("JobStatus")),
  });

  return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
          {"title", "tennis annotation service"},
          {"$defs", std::move(defs)},
          {"routes", std::move(routes)},
          {"errors",
           {{"400", "malformed request body"},
            {"404", "unknown id"},
            {"409", "overlap or duplicate"},
            {"422", "validation failure; detail carries a ValidationReport when one exists"},
            {"502", "remote predictor failure"},
            {"503", "job queue full"}}}};
}

}  // namespace tennis::service
