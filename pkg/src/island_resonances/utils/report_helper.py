from pathlib import Path

import jinja2


class ReportHelper:
    def __init__(self, report_file_name="report.md"):
        self.report_file_name = report_file_name
        self.searchpath = str(Path(__file__).parent / "templates")
        self.template = "report.md.j2"

    def render(self, template_data):
        rendered_report = self._render_report(template_data)
        return rendered_report

    def _render_report(self, template_data):
        template_loader = jinja2.FileSystemLoader(searchpath=self.searchpath)
        template_env = jinja2.Environment(loader=template_loader, trim_blocks=True, lstrip_blocks=True)
        template_env.filters["num"] = self._format_number
        template = template_env.get_template(self.template)
        return template.render(template_data)

    @staticmethod
    def _format_number(value):
        if isinstance(value, bool) or value is None:
            return str(value)
        if isinstance(value, (int, float)):
            return f"{value:.6g}"
        return str(value)

    def prepare_template_data(self, bundle):
        data = bundle.to_dict()
        return {
            "experiment": data["experiment"],
            "config_hash": data["config_hash"],
            "passed": data["passed"],
            "properties": data["properties"],
            "summary": data["summary"],
            "count_reports": data["count_reports"],
            "match_reports": data["match_reports"],
            "constants_reports": data["constants_reports"],
            "tables": sorted(data["tables"]),
            "versions": data["provenance"]["versions"],
        }

    def write(self, bundle, out_dir):
        path = Path(out_dir) / self.report_file_name
        path.write_text(self.render(self.prepare_template_data(bundle)))
        return path


if __name__ == "__main__":
    pass
