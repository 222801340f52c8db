#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ricemap/error.hpp"

namespace ricemap {

// Alias -> canonical district names. Administrative reorganizations and data
// sources disagree on spellings, so every name entering the pipeline goes
// through normalize() and unknown names are hard errors, never passed through.
class DistrictDictionary {
public:
    // Lookup key folding: lowercase, separator runs (space/hyphen/underscore)
    // collapsed to one space, trimmed.
    static std::string fold_key(const std::string& raw) {
        std::string out;
        out.reserve(raw.size());
        bool pending_sep = false;
        for (char ch : raw) {
            const unsigned char c = static_cast<unsigned char>(ch);
            if (c == ' ' || c == '\t' || c == '-' || c == '_') {
                pending_sep = !out.empty();
                continue;
            }
            if (pending_sep) {
                out.push_back(' ');
                pending_sep = false;
            }
            out.push_back(char(std::tolower(c)));
        }
        return out;
    }

    void add(const std::string& alias, const std::string& canonical) {
        map_[fold_key(alias)] = canonical;
        canonicals_.insert(canonical);
        map_[fold_key(canonical)] = canonical;
    }

    std::string normalize(const std::string& raw) const {
        const auto it = map_.find(fold_key(raw));
        if (it == map_.end()) {
            throw validation_error("unknown district name: '" + raw + "'");
        }
        return it->second;
    }

    bool known(const std::string& raw) const { return map_.count(fold_key(raw)) > 0; }

    const std::set<std::string>& canonical_names() const { return canonicals_; }

    // Two-column tab-separated `alias<TAB>canonical`; '#' comments and blank
    // lines ignored.
    static DistrictDictionary parse(const std::string& text) {
        DistrictDictionary dict;
        std::size_t pos = 0;
        int lineno = 0;
        while (pos <= text.size()) {
            const std::size_t eol = text.find('\n', pos);
            std::string line = text.substr(pos, eol == std::string::npos ? eol : eol - pos);
            pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos) {
                throw validation_error("district dictionary line " + std::to_string(lineno) +
                                       ": expected alias<TAB>canonical");
            }
            dict.add(line.substr(0, tab), line.substr(tab + 1));
        }
        require(!dict.map_.empty(), "district dictionary is empty");
        return dict;
    }

    static DistrictDictionary load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw io_error("cannot read district dictionary: " + path.string());
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return parse(text);
    }

    // Compiled-in copy of data/districts.tsv: the 33 canonical names plus the
    // seeded alias classes (variant spellings, renames, partial identifiers).
    static const DistrictDictionary& builtin();

private:
    std::map<std::string, std::string> map_;
    std::set<std::string> canonicals_;
};

namespace detail {
inline const char* builtin_district_table() {
    return R"TSV(Adilabad	Adilabad
Bhadradri Kothagudem	Bhadradri Kothagudem
Hanumakonda	Hanumakonda
Hyderabad	Hyderabad
Jagtial	Jagtial
Jangoan	Jangoan
Jayashankar Bhupalpally	Jayashankar Bhupalpally
Jogulamba Gadwal	Jogulamba Gadwal
Kamareddy	Kamareddy
Karimnagar	Karimnagar
Khammam	Khammam
Kumurambheem Asifabad	Kumurambheem Asifabad
Mahabubabad	Mahabubabad
Mahabubnagar	Mahabubnagar
Mancherial	Mancherial
Medak	Medak
Medchal Malkajgiri	Medchal Malkajgiri
Mulugu	Mulugu
Nagarkurnool	Nagarkurnool
Nalgonda	Nalgonda
Narayanpet	Narayanpet
Nirmal	Nirmal
Nizamabad	Nizamabad
Peddapalli	Peddapalli
Rajanna Sircilla	Rajanna Sircilla
Rangareddy	Rangareddy
Sangareddy	Sangareddy
Siddipet	Siddipet
Suryapet	Suryapet
Vikarabad	Vikarabad
Wanaparthy	Wanaparthy
Warangal	Warangal
Yadadri Bhuvanagiri	Yadadri Bhuvanagiri
Jagitial	Jagtial
Jagtiyal	Jagtial
Jangaon	Jangoan
Jagityal	Jagtial
Rajanna Siricilla	Rajanna Sircilla
Sircilla	Rajanna Sircilla
Mahbubnagar	Mahabubnagar
Mahaboobnagar	Mahabubnagar
Mahabubabad	Mahabubabad
Mahaboobabad	Mahabubabad
Komaram Bheem Asifabad	Kumurambheem Asifabad
Kumaram Bheem Asifabad	Kumurambheem Asifabad
Komarambheem Asifabad	Kumurambheem Asifabad
Jayashankar Bhoopalpally	Jayashankar Bhupalpally
Bhoopalpally	Jayashankar Bhupalpally
Peddapalle	Peddapalli
Hanamkonda	Hanumakonda
Yadadri Bhongir	Yadadri Bhuvanagiri
Warangal Urban	Hanumakonda
Warangal Rural	Warangal
Medchal	Medchal Malkajgiri
Malkajgiri	Medchal Malkajgiri
Yadadri	Yadadri Bhuvanagiri
Bhuvanagiri	Yadadri Bhuvanagiri
Jayashankar	Jayashankar Bhupalpally
Bhupalpally	Jayashankar Bhupalpally
Jogulamba	Jogulamba Gadwal
Gadwal	Jogulamba Gadwal
Bhadradri	Bhadradri Kothagudem
Kothagudem	Bhadradri Kothagudem
Komaram Bheem	Kumurambheem Asifabad
Asifabad	Kumurambheem Asifabad
Ranga Reddy	Rangareddy
Nagar Kurnool	Nagarkurnool
Sanga Reddy	Sangareddy
)TSV";
}
} // namespace detail

inline const DistrictDictionary& DistrictDictionary::builtin() {
    static const DistrictDictionary dict = parse(detail::builtin_district_table());
    return dict;
}

inline std::string normalize_district_name(const std::string& raw,
                                           const DistrictDictionary& dict =
                                               DistrictDictionary::builtin()) {
    return dict.normalize(raw);
}

} // namespace ricemap
