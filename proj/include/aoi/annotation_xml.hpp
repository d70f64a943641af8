#pragma once

#include <string>

#include "aoi/core.hpp"

namespace aoi {

// Fixed schema, UTF-8, no attributes:
//   annotation > filename, size(width,height,depth), object*(name, bndbox(xmin,ymin,xmax,ymax))
std::string annotation_to_xml(const Annotation& ann);
Annotation annotation_from_xml(const std::string& xml);

void write_annotation(const Annotation& ann, const std::string& path);
Annotation read_annotation(const std::string& path);

}  // namespace aoi
