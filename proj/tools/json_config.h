#pragma once

#include <algorithm>
#include <istream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace bbpatch::cli {

// CLI11 config reader for JSON files. Top-level keys are long option names
// without the dashes and apply to `section`; an object under a subcommand's
// name applies to that subcommand. Arrays feed multi-value options.
class JsonConfig : public CLI::Config {
 public:
  JsonConfig(std::string section, std::vector<std::string> subcommands)
      : section_(std::move(section)), subcommands_(std::move(subcommands)) {}

  std::string to_config(const CLI::App* app, bool default_also, bool,
                        std::string) const override {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->get_configurable() == false) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& res = opt->results();
        j[name] = res.size() == 1 ? nlohmann::json(res.front()) : nlohmann::json(res);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(std::string(std::istreambuf_iterator<char>(input), {}));
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    std::vector<std::string> top;
    if (!section_.empty()) top.push_back(section_);
    for (const auto& [key, value] : j.items()) {
      const bool is_section =
          value.is_object() && std::find(subcommands_.begin(), subcommands_.end(), key) != subcommands_.end();
      nlohmann::json one = nlohmann::json::object();
      one[key] = value;
      collect(one, is_section ? std::vector<std::string>{} : top, items);
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void collect(const nlohmann::json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_null()) continue;
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        collect(value, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }

  std::string section_;
  std::vector<std::string> subcommands_;
};

}  // namespace bbpatch::cli
