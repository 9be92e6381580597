from pptx import Presentation
from pptx.util import Inches, Pt
from pptx.dml.color import RGBColor
from pptx.enum.text import PP_ALIGN
from typing import List, Sequence

import pandas as pd

from analysis import (
    EvaluationRun,
    accuracy_table,
    compare_presets,
    distance_report,
    tf2_report,
    trend_report,
)
from classes import TF2Reference

TITLE_COLOR = RGBColor(0, 51, 102)  # Dark blue
TEXT_COLOR = RGBColor(51, 51, 51)  # Dark gray
SUBTLE_COLOR = RGBColor(89, 89, 89)  # Gray
MAX_TABLE_ROWS = 14


class EvaluationDeck:
    """Builds a PowerPoint summary of an evaluation with python-pptx"""

    def __init__(self):
        self.presentation = None

    def create_presentation(self) -> None:
        self.presentation = Presentation()
        self.presentation.slide_width = Inches(10)
        self.presentation.slide_height = Inches(7.5)

    def _style_title(self, slide, title: str, size: int) -> None:
        title_shape = slide.shapes.title
        title_shape.text = title
        paragraph = title_shape.text_frame.paragraphs[0]
        paragraph.font.size = Pt(size)
        paragraph.font.bold = True
        paragraph.font.color.rgb = TITLE_COLOR

    def add_title_slide(self, title: str, subtitle: str = "") -> None:
        slide = self.presentation.slides.add_slide(self.presentation.slide_layouts[0])
        self._style_title(slide, title, 40)
        slide.shapes.title.text_frame.paragraphs[0].alignment = PP_ALIGN.CENTER

        if subtitle:
            for placeholder in slide.placeholders:
                if placeholder.placeholder_format.idx == 1:  # Subtitle placeholder
                    placeholder.text = subtitle
                    paragraph = placeholder.text_frame.paragraphs[0]
                    paragraph.font.size = Pt(20)
                    paragraph.font.color.rgb = SUBTLE_COLOR
                    paragraph.alignment = PP_ALIGN.CENTER
                    break

    def add_content_slide(self, title: str, content: List[str]) -> None:
        """Title plus bullet points"""
        slide = self.presentation.slides.add_slide(self.presentation.slide_layouts[1])
        self._style_title(slide, title, 30)

        text_frame = slide.placeholders[1].text_frame
        text_frame.clear()
        for i, point in enumerate(content):
            paragraph = text_frame.paragraphs[0] if i == 0 else text_frame.add_paragraph()
            paragraph.text = point
            paragraph.level = 0
            paragraph.font.size = Pt(16)
            paragraph.font.color.rgb = TEXT_COLOR
            paragraph.space_after = Pt(8)

    def add_table_slide(self, title: str, table: pd.DataFrame, digits: int = 3) -> None:
        """Title plus a table; long tables are cut to MAX_TABLE_ROWS rows"""
        slide = self.presentation.slides.add_slide(self.presentation.slide_layouts[5])  # Title only
        self._style_title(slide, title, 28)

        shown = table.head(MAX_TABLE_ROWS)
        rows, cols = len(shown) + 1, max(1, len(shown.columns))
        shape = slide.shapes.add_table(rows, cols, Inches(0.3), Inches(1.4), Inches(9.4), Inches(0.4) * rows)
        grid = shape.table
        font_size = Pt(12 if cols <= 6 else 9)

        for c, column in enumerate(shown.columns):
            grid.cell(0, c).text = str(column)
        for r, values in enumerate(shown.itertuples(index=False), start=1):
            for c, value in enumerate(values):
                grid.cell(r, c).text = f"{value:.{digits}f}" if isinstance(value, float) else str(value)
        for r in range(rows):
            for c in range(cols):
                for paragraph in grid.cell(r, c).text_frame.paragraphs:
                    paragraph.font.size = font_size

    def save_presentation(self, filename: str) -> bool:
        try:
            if not self.presentation:
                raise ValueError("No presentation created")
            if not filename.endswith('.pptx'):
                filename += '.pptx'
            self.presentation.save(filename)
            return True
        except Exception as e:
            print(f"❌ Error saving deck: {e}")
            return False


def build_evaluation_deck(runs: Sequence[EvaluationRun], path: str, refs: Sequence[TF2Reference] = (),
                          title: str = "Class pair evaluation", subtitle: str = "") -> bool:
    """Title slide, accuracy counts, distances, preset comparison, hit-point trend and TF2 labels"""
    deck = EvaluationDeck()
    deck.create_presentation()
    deck.add_title_slide(title, subtitle or f"{len(runs)} evolved class pairs")

    accuracy = accuracy_table(runs)
    bullets = [
        f"{row.model} {row.preset}/{row.origin}: duration {row.duration_accurate}/{row.runs}, "
        f"score {row.score_accurate}/{row.runs} accurate"
        for row in accuracy.itertuples(index=False)
    ]
    deck.add_content_slide("Prediction accuracy", bullets or ["No runs"])

    distances = distance_report(runs)
    deck.add_table_slide("Distances to desired and predicted outcomes",
                         distances[["preset", "origin", "runs", "at_dt_mean", "as_ds_mean",
                                    "a_d_eucl_mean", "a_p_eucl_mean"]])
    deck.add_table_slide("Ground truth between presets", compare_presets(runs))

    trends = trend_report(runs)
    deck.add_table_slide("Hit points per duration preset",
                         trends[trends["parameter"] == "hit_points"][["preset", "player", "n", "mean", "ci"]])

    if refs:
        labels = tf2_report(runs, refs)
        deck.add_table_slide("TF2 class labels", labels[labels["player"] == "all"])

    return deck.save_presentation(path)
